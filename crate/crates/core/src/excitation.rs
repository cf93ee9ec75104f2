//! Sample-rate sine excitation from a frame-rate F0 track.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An F0 contour in Hz sampled at `rate` steps per second.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub values: Vec<f32>,
    pub rate: f64,
    pub voiced: Option<Vec<bool>>,
}

impl F0Track {
    pub fn new(values: Vec<f32>, rate: f64) -> Self {
        Self {
            values,
            rate,
            voiced: None,
        }
    }

    pub fn with_voicing(mut self, voiced: Vec<bool>) -> Self {
        self.voiced = Some(voiced);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Voicing per step: the explicit mask when present, else `f0 > threshold`.
    pub fn voicing(&self, threshold: f32) -> Vec<bool> {
        match &self.voiced {
            Some(v) => v.clone(),
            None => self.values.iter().map(|&f| f > threshold).collect(),
        }
    }
}

/// A mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Sine source parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineParams {
    /// Peak amplitude of voiced samples.
    pub amplitude: f32,
    /// Std of the additive noise on voiced samples.
    pub noise_std: f32,
    /// F0 above which a sample counts as voiced when no v/uv mask is given.
    pub voiced_threshold: f32,
}

impl Default for SineParams {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            noise_std: 0.003,
            voiced_threshold: 10.0,
        }
    }
}

/// Linear interpolation of a frame-rate track onto `hop` samples per frame.
///
/// Frame `i` is anchored at the centre of its hop; samples before the first
/// or after the last centre hold the edge value. The voicing mask, if any, is
/// repeated per sample.
pub fn upsample_f0(track: &F0Track, hop: usize) -> Result<F0Track> {
    if track.is_empty() {
        return Err(Error::InvalidArgument("cannot upsample an empty F0 track".into()));
    }
    if hop == 0 {
        return Err(Error::InvalidArgument("hop must be positive".into()));
    }
    let frames = track.values.len();
    let last = (frames - 1) as f64;
    let h = hop as f64;
    let values = (0..frames * hop)
        .map(|t| {
            let pos = ((t as f64 + 0.5) / h - 0.5).clamp(0.0, last);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let a = f64::from(track.values[i]);
            if frac == 0.0 {
                a as f32
            } else {
                let b = f64::from(track.values[i + 1]);
                (a + (b - a) * frac) as f32
            }
        })
        .collect();
    let voiced = track
        .voiced
        .as_ref()
        .map(|v| v.iter().flat_map(|&b| std::iter::repeat_n(b, hop)).collect());
    Ok(F0Track {
        values,
        rate: track.rate * h,
        voiced,
    })
}

/// Sine excitation: `amp * sin(phase_t) + N(0, noise_std^2)` on voiced samples,
/// `N(0, (amp/3)^2)` on unvoiced ones.
///
/// The phase starts at zero and accumulates `2*pi*f/sample_rate` per sample
/// in `f64`. One normal draw is consumed per sample regardless of voicing.
pub fn generate_sine(
    f0: &F0Track,
    sample_rate: u32,
    params: &SineParams,
    seed: u64,
) -> Result<Waveform> {
    if (f0.rate - f64::from(sample_rate)).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "sine generation needs F0 at {sample_rate} Hz, track is at {} Hz",
            f0.rate
        )));
    }
    let voiced = f0.voicing(params.voiced_threshold);
    if voiced.len() != f0.len() {
        return Err(Error::LengthMismatch {
            what: "voicing mask".into(),
            expected: f0.len(),
            found: voiced.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = std::f64::consts::TAU / f64::from(sample_rate);
    let amp = f64::from(params.amplitude);
    let unvoiced_std = params.amplitude / 3.0;
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(f0.len());
    for (&f, &v) in f0.values.iter().zip(&voiced) {
        let z: f32 = StandardNormal.sample(&mut rng);
        let s = if v {
            (amp * phase.sin()) as f32 + z * params.noise_std
        } else {
            z * unvoiced_std
        };
        samples.push(s);
        phase = (phase + step * f64::from(f)) % std::f64::consts::TAU;
    }
    Ok(Waveform::new(samples, sample_rate))
}
