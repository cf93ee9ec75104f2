//! Autocorrelation F0 estimation and pitch metrics.

use serde::{Deserialize, Serialize};

use crate::excitation::{F0Track, Waveform};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0EstimatorConfig {
    pub fmin: f64,
    pub fmax: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Minimum normalized autocorrelation of a voiced frame.
    pub clarity: f64,
}

impl Default for F0EstimatorConfig {
    fn default() -> Self {
        Self {
            fmin: 50.0,
            fmax: 1000.0,
            frame_ms: 25.0,
            hop_ms: 5.0,
            clarity: 0.5,
        }
    }
}

pub fn estimate_f0(x: &Waveform, fmin: f64, fmax: f64) -> Result<F0Track> {
    estimate_f0_with(
        x,
        &F0EstimatorConfig {
            fmin,
            fmax,
            ..F0EstimatorConfig::default()
        },
    )
}

fn normalized_acf(seg: &[f64], lag: usize) -> f64 {
    let n = seg.len() - lag;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (seg[i], seg[i + lag]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let d = (xx * yy).sqrt();
    if d > 0.0 {
        xy / d
    } else {
        0.0
    }
}

/// One estimate per hop; frame `f` is centred on `f * hop + hop / 2`.
///
/// Unvoiced frames carry 0 Hz and a false voicing flag.
pub fn estimate_f0_with(x: &Waveform, cfg: &F0EstimatorConfig) -> Result<F0Track> {
    let sr = f64::from(x.sample_rate);
    let win = (cfg.frame_ms * sr / 1000.0).round() as usize;
    let hop = (cfg.hop_ms * sr / 1000.0).round() as usize;
    if !(cfg.fmin > 0.0 && cfg.fmax > cfg.fmin) {
        return Err(Error::InvalidArgument(format!(
            "F0 search range [{}, {}] is empty",
            cfg.fmin, cfg.fmax
        )));
    }
    if hop == 0 || win < 4 {
        return Err(Error::InvalidArgument("F0 frame and hop too short".into()));
    }
    let lag_min = ((sr / cfg.fmax).floor() as usize).max(2);
    let lag_max = ((sr / cfg.fmin).ceil() as usize).min(win - 2);
    if lag_min >= lag_max {
        return Err(Error::InvalidArgument(format!(
            "{win}-sample frames cannot resolve F0 down to {} Hz",
            cfg.fmin
        )));
    }
    let n = x.len();
    let frames = n / hop;
    let mut values = Vec::with_capacity(frames);
    let mut voiced = Vec::with_capacity(frames);
    let mut seg = vec![0.0f64; win];
    let mut acf = vec![0.0f64; lag_max + 2];
    for f in 0..frames {
        let start = (f * hop + hop / 2) as isize - (win / 2) as isize;
        for (i, s) in seg.iter_mut().enumerate() {
            let t = start + i as isize;
            *s = if t < 0 || t as usize >= n {
                0.0
            } else {
                f64::from(x.samples[t as usize])
            };
        }
        let energy: f64 = seg.iter().map(|v| v * v).sum();
        if energy < 1e-10 {
            values.push(0.0);
            voiced.push(false);
            continue;
        }
        for lag in lag_min - 1..=lag_max + 1 {
            acf[lag] = normalized_acf(&seg, lag);
        }
        let peaks: Vec<usize> = (lag_min..=lag_max)
            .filter(|&l| acf[l] >= acf[l - 1] && acf[l] > acf[l + 1])
            .collect();
        let best = peaks.iter().map(|&l| acf[l]).fold(f64::NEG_INFINITY, f64::max);
        let pick = peaks.iter().copied().find(|&l| acf[l] >= 0.9 * best);
        match pick {
            Some(l) if acf[l] > cfg.clarity => {
                let (a, b, c) = (acf[l - 1], acf[l], acf[l + 1]);
                let denom = a - 2.0 * b + c;
                let delta = if denom.abs() > 1e-12 {
                    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                values.push((sr / (l as f64 + delta)) as f32);
                voiced.push(true);
            }
            _ => {
                values.push(0.0);
                voiced.push(false);
            }
        }
    }
    Ok(F0Track::new(values, sr / hop as f64).with_voicing(voiced))
}

/// RMSE of natural-log F0 over frames voiced in both tracks.
///
/// Returns `None` when no frame is voiced in both.
pub fn log_f0_rmse(reference: &F0Track, estimate: &F0Track) -> Option<f64> {
    let va = reference.voicing(0.0);
    let vb = estimate.voicing(0.0);
    let (mut sum, mut count) = (0.0f64, 0usize);
    for i in 0..reference.len().min(estimate.len()) {
        let (a, b) = (reference.values[i], estimate.values[i]);
        if va[i] && vb[i] && a > 0.0 && b > 0.0 {
            let d = f64::from(a).ln() - f64::from(b).ln();
            sum += d * d;
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64).sqrt())
}

/// Percentage of frames whose voicing decisions disagree.
pub fn vuv_error(reference: &F0Track, estimate: &F0Track) -> f64 {
    let va = reference.voicing(0.0);
    let vb = estimate.voicing(0.0);
    let n = va.len().min(vb.len());
    if n == 0 {
        return 0.0;
    }
    let wrong = va.iter().zip(&vb).filter(|(a, b)| a != b).count();
    100.0 * wrong as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_common_voiced_frames() {
        let a = F0Track::new(vec![100.0, 0.0], 200.0);
        let b = F0Track::new(vec![0.0, 100.0], 200.0);
        assert_eq!(log_f0_rmse(&a, &b), None);
        assert_eq!(vuv_error(&a, &b), 100.0);
    }

    #[test]
    fn bad_range_rejected() {
        let w = Waveform::new(vec![0.0; 2400], 24000);
        assert!(estimate_f0(&w, 300.0, 100.0).is_err());
    }

    #[test]
    fn frame_count() {
        let w = Waveform::new(vec![0.0; 2400], 24000);
        let t = estimate_f0(&w, 50.0, 1000.0).unwrap();
        assert_eq!(t.len(), 20);
        assert_eq!(t.rate, 200.0);
    }
}
