//! Residual blocks of the two networks.

use crate::kernels::{leaky_relu, leaky_relu_inplace, Conv1d, ConvSpec, Dilation};
use crate::weights::WeightStore;
use crate::{Error, FeatureMap, Result};

pub(crate) fn load_conv(store: &WeightStore, name: &str, spec: ConvSpec) -> Result<Conv1d> {
    let w = store.expect(&format!("{name}.weight"), &spec.weight_shape())?;
    let b = store.expect(&format!("{name}.bias"), &[spec.out_channels])?;
    Conv1d::new(name, spec, w.data.clone(), b.data.clone())
}

/// One repetition: pitch-dependent conv followed by a fixed conv.
#[derive(Debug, Clone)]
pub struct QpUnit {
    pub name: String,
    pub pd_weight: Vec<f32>,
    pub pd_bias: Vec<f32>,
    pub conv: Conv1d,
}

/// Quasi-periodic residual block.
///
/// Each repetition computes
/// `x = x + conv(lrelu(pd_conv(lrelu(x), d_t)))`, where the pitch-dependent
/// conv's dilation follows the F0 schedule of that repetition.
#[derive(Debug, Clone)]
pub struct QpResBlock {
    pub channels: usize,
    pub kernel_size: usize,
    pub slope: f32,
    pub units: Vec<QpUnit>,
}

impl QpResBlock {
    pub fn load(
        store: &WeightStore,
        prefix: &str,
        channels: usize,
        kernel_size: usize,
        repetitions: usize,
        slope: f32,
    ) -> Result<Self> {
        let shape = [channels, channels, kernel_size];
        let units = (0..repetitions)
            .map(|j| {
                let name = format!("{prefix}.{j}");
                let pd_w = store.expect(&format!("{name}.pd.weight"), &shape)?;
                let pd_b = store.expect(&format!("{name}.pd.bias"), &[channels])?;
                let conv = load_conv(store, &format!("{name}.conv"), ConvSpec::same(channels, channels, kernel_size, 1))?;
                Ok(QpUnit {
                    name,
                    pd_weight: pd_w.data.clone(),
                    pd_bias: pd_b.data.clone(),
                    conv,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            channels,
            kernel_size,
            slope,
            units,
        })
    }
}

/// Runs a QP-ResBlock with one dilation choice per repetition.
pub fn qp_resblock_forward(x: &FeatureMap, block: &QpResBlock, dilations: &[Dilation]) -> Result<FeatureMap> {
    if dilations.len() != block.units.len() {
        return Err(Error::LengthMismatch {
            what: "QP-ResBlock dilation list".into(),
            expected: block.units.len(),
            found: dilations.len(),
        });
    }
    let mut x = x.clone();
    for (unit, dil) in block.units.iter().zip(dilations) {
        let h = leaky_relu(&x, block.slope);
        let mut h = dil.apply(
            &h,
            &unit.pd_weight,
            &unit.pd_bias,
            block.channels,
            block.kernel_size,
            &format!("{}.pd", unit.name),
        )?;
        leaky_relu_inplace(&mut h, block.slope);
        let h = unit.conv.forward(&h)?;
        x.add_assign(&h)?;
    }
    Ok(x)
}

/// Multi-receptive-field fusion: parallel residual branches of dilated convs
/// with no follow-up conv, averaged.
#[derive(Debug, Clone)]
pub struct Mrf {
    pub slope: f32,
    pub branches: Vec<Vec<Conv1d>>,
}

impl Mrf {
    pub fn load(
        store: &WeightStore,
        prefix: &str,
        channels: usize,
        kernel_sizes: &[usize],
        dilations: &[Vec<usize>],
        slope: f32,
    ) -> Result<Self> {
        let branches = kernel_sizes
            .iter()
            .zip(dilations)
            .enumerate()
            .map(|(b, (&k, dils))| {
                dils.iter()
                    .enumerate()
                    .map(|(j, &d)| load_conv(store, &format!("{prefix}.{b}.{j}"), ConvSpec::same(channels, channels, k, d)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self { slope, branches })
    }
}

/// Mean over branches of `x` refined by `x = x + conv_d(lrelu(x))` per dilation.
pub fn mrf_forward(x: &FeatureMap, mrf: &Mrf) -> Result<FeatureMap> {
    let mut acc: Option<FeatureMap> = None;
    for branch in &mrf.branches {
        let mut b = x.clone();
        for conv in branch {
            let h = conv.forward(&leaky_relu(&b, mrf.slope))?;
            b.add_assign(&h)?;
        }
        match acc.as_mut() {
            None => acc = Some(b),
            Some(a) => a.add_assign(&b)?,
        }
    }
    let n = mrf.branches.len() as f32;
    let mut out = acc.ok_or_else(|| Error::Config("MRF without branches".into()))?;
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    Ok(out)
}
