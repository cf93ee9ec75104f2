//! Pitch-dependent dilation schedules and the matching convolution.

use super::conv::{conv1d_named, ConvSpec, Padding};
use super::gemm::gathered_conv;
use crate::{Error, FeatureMap, Result};

/// Lowest F0 admitted into the dilation formula.
pub const F0_FLOOR_HZ: f32 = 1.0;

/// Per-sample dilation sizes derived from an F0 track.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationSchedule {
    dilations: Vec<usize>,
    base_dilation: usize,
    dense_factor: f64,
    local_rate: f64,
    clamped: usize,
}

impl DilationSchedule {
    /// A schedule holding the same dilation at every step.
    pub fn constant(dilation: usize, len: usize) -> Self {
        Self {
            dilations: vec![dilation; len],
            base_dilation: dilation,
            dense_factor: f64::NAN,
            local_rate: f64::NAN,
            clamped: 0,
        }
    }

    pub fn dilations(&self) -> &[usize] {
        &self.dilations
    }

    pub fn len(&self) -> usize {
        self.dilations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dilations.is_empty()
    }

    pub fn base_dilation(&self) -> usize {
        self.base_dilation
    }

    pub fn dense_factor(&self) -> f64 {
        self.dense_factor
    }

    pub fn local_rate(&self) -> f64 {
        self.local_rate
    }

    /// Number of F0 samples raised to [`F0_FLOOR_HZ`].
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `Some(d)` when every step uses dilation `d`.
    pub fn as_constant(&self) -> Option<usize> {
        let first = *self.dilations.first()?;
        self.dilations.iter().all(|&d| d == first).then_some(first)
    }
}

/// The period-proportional dilation for one step.
///
/// `E = local_rate / (f0 * dense)`; returns `floor(E) * base` when `E > 1`,
/// otherwise `base`.
pub fn dilation_for(f0: f32, local_rate: f64, dense_factor: f64, base_dilation: usize) -> usize {
    let f = f64::from(f0.max(F0_FLOOR_HZ));
    let e = local_rate / (f * dense_factor);
    if e > 1.0 {
        e.floor() as usize * base_dilation
    } else {
        base_dilation
    }
}

/// Builds the time-variant dilation schedule for an F0 track sampled at `local_rate`.
pub fn compute_dilation_schedule(
    f0: &[f32],
    local_rate: f64,
    dense_factor: f64,
    base_dilation: usize,
) -> Result<DilationSchedule> {
    if !(local_rate > 0.0) || !(dense_factor > 0.0) || base_dilation == 0 {
        return Err(Error::InvalidArgument(format!(
            "dilation schedule needs positive rate, dense factor and dilation \
             (got {local_rate}, {dense_factor}, {base_dilation})"
        )));
    }
    if let Some(i) = f0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("f0 sample {i}")));
    }
    let clamped = f0.iter().filter(|&&v| v < F0_FLOOR_HZ).count();
    let dilations = f0
        .iter()
        .map(|&f| dilation_for(f, local_rate, dense_factor, base_dilation))
        .collect();
    Ok(DilationSchedule {
        dilations,
        base_dilation,
        dense_factor,
        local_rate,
        clamped,
    })
}

/// Dilated convolution whose dilation follows `sched` step by step.
///
/// Output `t` reads `x[t + (k - K/2) * d_t]` for tap `k`, zero outside the
/// signal, so a constant schedule reproduces [`super::conv1d`] with that
/// dilation exactly.
pub fn pd_conv1d(
    x: &FeatureMap,
    weight: &[f32],
    bias: &[f32],
    out_channels: usize,
    kernel_size: usize,
    sched: &DilationSchedule,
) -> Result<FeatureMap> {
    pd_conv1d_named(x, weight, bias, out_channels, kernel_size, sched, "pd_conv1d")
}

pub(crate) fn pd_conv1d_named(
    x: &FeatureMap,
    weight: &[f32],
    bias: &[f32],
    out_channels: usize,
    kernel_size: usize,
    sched: &DilationSchedule,
    name: &str,
) -> Result<FeatureMap> {
    if sched.len() != x.len() {
        return Err(Error::LengthMismatch {
            what: format!("{name} dilation schedule"),
            expected: x.len(),
            found: sched.len(),
        });
    }
    let spec = ConvSpec {
        in_channels: x.channels(),
        out_channels,
        kernel_size,
        stride: 1,
        dilation: 1,
        padding: Padding::Same,
    };
    spec.validate()?;
    if weight.len() != out_channels * x.channels() * kernel_size {
        return Err(Error::ShapeMismatch {
            name: format!("{name}.weight"),
            expected: spec.weight_shape().to_vec(),
            found: vec![weight.len()],
        });
    }
    if bias.len() != out_channels {
        return Err(Error::ShapeMismatch {
            name: format!("{name}.bias"),
            expected: vec![out_channels],
            found: vec![bias.len()],
        });
    }
    let len = x.len();
    let half = (kernel_size / 2) as isize;
    // taps further than `len` away are always padding
    let d = sched.dilations();
    let data = gathered_conv(
        x.data(),
        x.channels(),
        len,
        weight,
        bias,
        out_channels,
        kernel_size,
        len,
        |t, k| {
            let dt = d[t].min(len) as isize;
            let s = t as isize + (k as isize - half) * dt;
            (s >= 0).then_some(s as usize)
        },
    );
    FeatureMap::from_vec(out_channels, len, data)
}

/// Either a pitch-dependent schedule or a fixed dilation for one conv layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Dilation {
    PitchDependent(DilationSchedule),
    Fixed(usize),
}

impl Dilation {
    pub(crate) fn apply(
        &self,
        x: &FeatureMap,
        weight: &[f32],
        bias: &[f32],
        out_channels: usize,
        kernel_size: usize,
        name: &str,
    ) -> Result<FeatureMap> {
        match self {
            Dilation::PitchDependent(s) => {
                pd_conv1d_named(x, weight, bias, out_channels, kernel_size, s, name)
            }
            Dilation::Fixed(d) => conv1d_named(
                x,
                &ConvSpec::same(x.channels(), out_channels, kernel_size, *d),
                weight,
                bias,
                name,
            ),
        }
    }
}
