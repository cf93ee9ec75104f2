use rayon::prelude::*;

use super::gemm::matmul_strided_a;
use crate::{Error, FeatureMap, Result};

/// Fractionally-strided convolution producing exactly `stride` outputs per input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransposedSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    /// Samples cropped from the start of the full transposed output.
    pub padding: usize,
}

impl TransposedSpec {
    /// Upsampler with `kernel = 2 * rate` and `padding = ceil(rate / 2)`.
    pub fn upsample(in_channels: usize, out_channels: usize, rate: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size: 2 * rate,
            stride: rate,
            padding: rate.div_ceil(2),
        }
    }

    /// PyTorch layout: `[in, out, kernel]`.
    pub fn weight_shape(&self) -> [usize; 3] {
        [self.in_channels, self.out_channels, self.kernel_size]
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("transposed conv stride must be positive".into()));
        }
        if self.kernel_size == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!("degenerate transposed conv: {self:?}")));
        }
        if self.padding + self.stride > self.kernel_size {
            return Err(Error::Config(format!(
                "padding {} + stride {} exceeds kernel {}; output would be shorter than len*stride",
                self.padding, self.stride, self.kernel_size
            )));
        }
        Ok(())
    }
}

/// Transposed 1-D convolution with output length `x.len() * stride`.
///
/// The full transposed output (length `(len-1)*stride + kernel`) is cropped to
/// `[padding, padding + len*stride)`.
pub fn transposed_conv1d(
    x: &FeatureMap,
    spec: &TransposedSpec,
    weight: &[f32],
    bias: &[f32],
) -> Result<FeatureMap> {
    transposed_conv1d_named(x, spec, weight, bias, "transposed_conv1d")
}

pub(crate) fn transposed_conv1d_named(
    x: &FeatureMap,
    spec: &TransposedSpec,
    weight: &[f32],
    bias: &[f32],
    name: &str,
) -> Result<FeatureMap> {
    spec.validate()?;
    let [ci, co, k] = spec.weight_shape();
    if weight.len() != ci * co * k {
        return Err(Error::ShapeMismatch {
            name: format!("{name}.weight"),
            expected: vec![ci, co, k],
            found: vec![weight.len()],
        });
    }
    if bias.len() != co {
        return Err(Error::ShapeMismatch {
            name: format!("{name}.bias"),
            expected: vec![co],
            found: vec![bias.len()],
        });
    }
    if x.channels() != ci {
        return Err(Error::ShapeMismatch {
            name: format!("{name} input"),
            expected: vec![ci, x.len()],
            found: vec![x.channels(), x.len()],
        });
    }
    let len = x.len();
    let r = spec.stride;
    let out_len = len * r;

    // z[(o*k + tap), t] = sum_c w[c, o, tap] * x[c, t]
    let z = matmul_strided_a(weight, 1, co * k, co * k, ci, x.data(), len);

    let mut out = vec![0.0f32; co * out_len];
    if out_len == 0 {
        return FeatureMap::from_vec(co, 0, out);
    }
    let pad = spec.padding;
    let overlap_add = |(o, row): (usize, &mut [f32])| {
        row.fill(bias[o]);
        for t in 0..len {
            let base = t * r;
            for tap in 0..k {
                let pos = base + tap;
                if pos < pad || pos - pad >= out_len {
                    continue;
                }
                row[pos - pad] += z[(o * k + tap) * len + t];
            }
        }
    };
    if rayon::current_num_threads() > 1 {
        out.par_chunks_mut(out_len).enumerate().for_each(overlap_add);
    } else {
        out.chunks_mut(out_len).enumerate().for_each(overlap_add);
    }
    FeatureMap::from_vec(co, out_len, out)
}

/// Transposed convolution with owned parameters.
#[derive(Debug, Clone)]
pub struct TransposedConv1d {
    pub name: String,
    pub spec: TransposedSpec,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl TransposedConv1d {
    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        transposed_conv1d_named(x, &self.spec, &self.weight, &self.bias, &self.name)
    }
}
