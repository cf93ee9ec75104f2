use super::gemm::gathered_conv;
use crate::{Error, FeatureMap, Result};

/// Zero padding applied to both ends of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Explicit number of zeros on each side.
    Zero(usize),
    /// `dilation * (kernel - 1) / 2` zeros per side; length-preserving for
    /// odd kernels at stride 1.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvSpec {
    /// Stride-1 "same" convolution.
    pub fn same(in_channels: usize, out_channels: usize, kernel_size: usize, dilation: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            dilation,
            padding: Padding::Same,
        }
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels, self.kernel_size]
    }

    pub fn pad(&self) -> usize {
        match self.padding {
            Padding::Zero(p) => p,
            Padding::Same => self.dilation * (self.kernel_size - 1) / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::Config(format!(
                "kernel_size, stride and dilation must be positive: {self:?}"
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!("channel counts must be positive: {self:?}")));
        }
        if self.padding == Padding::Same && self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "same padding requires an odd kernel, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// `floor((len + 2*pad - dilation*(k-1) - 1) / stride) + 1`, or 0 when the
    /// padded input is shorter than the dilated kernel.
    pub fn output_len(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        let span = self.dilation * (self.kernel_size - 1) + 1;
        if padded < span {
            0
        } else {
            (padded - span) / self.stride + 1
        }
    }
}

fn check_weights(spec: &ConvSpec, weight: &[f32], bias: &[f32], name: &str) -> Result<()> {
    let [o, i, k] = spec.weight_shape();
    if weight.len() != o * i * k {
        return Err(Error::ShapeMismatch {
            name: format!("{name}.weight"),
            expected: vec![o, i, k],
            found: vec![weight.len()],
        });
    }
    if bias.len() != o {
        return Err(Error::ShapeMismatch {
            name: format!("{name}.bias"),
            expected: vec![o],
            found: vec![bias.len()],
        });
    }
    Ok(())
}

/// Standard 1-D cross-correlation.
///
/// `weight` is `[out, in, kernel]` row-major, `bias` is `[out]`.
pub fn conv1d(x: &FeatureMap, spec: &ConvSpec, weight: &[f32], bias: &[f32]) -> Result<FeatureMap> {
    conv1d_named(x, spec, weight, bias, "conv1d")
}

pub(crate) fn conv1d_named(
    x: &FeatureMap,
    spec: &ConvSpec,
    weight: &[f32],
    bias: &[f32],
    name: &str,
) -> Result<FeatureMap> {
    spec.validate()?;
    check_weights(spec, weight, bias, name)?;
    if x.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch {
            name: format!("{name} input"),
            expected: vec![spec.in_channels, x.len()],
            found: vec![x.channels(), x.len()],
        });
    }
    let out_len = spec.output_len(x.len());
    let pad = spec.pad() as isize;
    let (stride, dilation) = (spec.stride as isize, spec.dilation as isize);
    let data = gathered_conv(
        x.data(),
        spec.in_channels,
        x.len(),
        weight,
        bias,
        spec.out_channels,
        spec.kernel_size,
        out_len,
        |t, k| {
            let s = t as isize * stride + k as isize * dilation - pad;
            (s >= 0).then_some(s as usize)
        },
    );
    FeatureMap::from_vec(spec.out_channels, out_len, data)
}

/// A convolution with owned parameters.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv1d {
    pub fn new(name: impl Into<String>, spec: ConvSpec, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let name = name.into();
        spec.validate()?;
        check_weights(&spec, &weight, &bias, &name)?;
        Ok(Self {
            name,
            spec,
            weight,
            bias,
        })
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        conv1d_named(x, &self.spec, &self.weight, &self.bias, &self.name)
    }
}
