//! Linear prediction: Levinson-Durbin and the frame-wise inverse filter.

use serde::{Deserialize, Serialize};

use super::spectral::hann;
use crate::excitation::Waveform;
use crate::{Error, Result};

/// Predictor coefficients `a_1..a_p` with `x̂[t] = Σ a_k x[t-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcSolution {
    pub coeffs: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Final prediction error power.
    pub error: f64,
}

/// Solves the Toeplitz normal equations from autocorrelation `r[0..=order]`.
///
/// A zero-energy input yields all-zero coefficients. If the recursion becomes
/// unstable (error power non-positive) the remaining orders stay zero.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcSolution> {
    if r.len() <= order {
        return Err(Error::LengthMismatch {
            what: "autocorrelation lags".into(),
            expected: order + 1,
            found: r.len(),
        });
    }
    if r[..=order].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("autocorrelation".into()));
    }
    let mut a = vec![0.0f64; order];
    let mut reflection = vec![0.0f64; order];
    let mut err = r[0];
    if err <= 0.0 {
        return Ok(LpcSolution {
            coeffs: a,
            reflection,
            error: err.max(0.0),
        });
    }
    let mut prev = vec![0.0f64; order];
    for i in 0..order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = (r[i + 1] - acc) / err;
        let next_err = err * (1.0 - k * k);
        if !(next_err > 0.0) || !k.is_finite() {
            break;
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        reflection[i] = k;
        err = next_err;
    }
    Ok(LpcSolution {
        coeffs: a,
        reflection,
        error: err,
    })
}

/// Biased autocorrelation `r[k] = Σ x[n] x[n+k]` for `k = 0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                0.0
            } else {
                x[..x.len() - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpcConfig {
    pub order: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for LpcConfig {
    fn default() -> Self {
        Self {
            order: 24,
            frame_ms: 25.0,
            hop_ms: 5.0,
        }
    }
}

impl LpcConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }
}

/// Inverse-filters `x` with per-frame LPC and overlap-adds the residual.
///
/// Frame `f` is centred on sample `f * hop`; each frame's residual is Hann
/// weighted and the sum is normalized by the accumulated window.
pub fn lpc_residual(x: &Waveform, cfg: &LpcConfig) -> Result<Waveform> {
    let win = cfg.frame_len(x.sample_rate);
    let hop = cfg.hop_len(x.sample_rate);
    if win == 0 || hop == 0 {
        return Err(Error::InvalidArgument("LPC frame and hop must be positive".into()));
    }
    if cfg.order == 0 || cfg.order >= win {
        return Err(Error::InvalidArgument(format!(
            "LPC order {} must be in 1..{win}",
            cfg.order
        )));
    }
    let n = x.len();
    let xs: Vec<f64> = x.samples.iter().map(|&v| f64::from(v)).collect();
    let sample = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            xs[i as usize]
        }
    };
    let window = hann(win);
    let mut out = vec![0.0f64; n];
    let mut wsum = vec![0.0f64; n];
    let frames = n.div_ceil(hop);
    let mut seg = vec![0.0f64; win];
    for f in 0..frames {
        let start = (f * hop) as isize - (win / 2) as isize;
        for (i, s) in seg.iter_mut().enumerate() {
            *s = sample(start + i as isize) * window[i];
        }
        let r = autocorrelation(&seg, cfg.order);
        let a = levinson_durbin(&r, cfg.order)?.coeffs;
        for (i, &w) in window.iter().enumerate() {
            let t = start + i as isize;
            if t < 0 || t as usize >= n {
                continue;
            }
            let pred: f64 = a
                .iter()
                .enumerate()
                .map(|(k, &ak)| ak * sample(t - 1 - k as isize))
                .sum();
            let t = t as usize;
            out[t] += w * (xs[t] - pred);
            wsum[t] += w;
        }
    }
    let samples = out
        .iter()
        .zip(&wsum)
        .zip(&xs)
        .map(|((&o, &w), &v)| if w > 1e-9 { (o / w) as f32 } else { v as f32 })
        .collect();
    Ok(Waveform::new(samples, x.sample_rate))
}
