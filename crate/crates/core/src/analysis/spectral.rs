//! Magnitude STFT and the mel projection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::excitation::Waveform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

/// Analysis parameters shared by the mel-domain metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub window: WindowKind,
    /// Floor applied before taking the log of mel magnitudes.
    pub log_floor: f32,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24000,
            fft_size: 1024,
            hop: 120,
            n_mels: 80,
            fmin: 0.0,
            fmax: 12000.0,
            window: WindowKind::Hann,
            log_floor: 1e-5,
        }
    }
}

/// Frame-major magnitude spectrogram, `bins = fft_size / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub mags: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Spectrogram {
    pub fn frame(&self, f: usize) -> &[f32] {
        &self.mags[f * self.bins..(f + 1) * self.bins]
    }
}

/// Frame-major mel spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub frames: usize,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn frame(&self, f: usize) -> &[f32] {
        &self.values[f * self.n_mels..(f + 1) * self.n_mels]
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Reflect-pads `x` by `pad` on both sides (no edge repeat).
pub(crate) fn reflect_pad(x: &[f32], pad: usize) -> Vec<f32> {
    let n = x.len() as isize;
    (-(pad as isize)..n + pad as isize)
        .map(|i| {
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            x[j as usize]
        })
        .collect()
}

/// Center-padded Hann STFT magnitudes; `1 + len / hop` frames.
pub fn stft(x: &Waveform, fft_size: usize, hop: usize) -> Result<Spectrogram> {
    if fft_size == 0 || hop == 0 {
        return Err(Error::InvalidArgument("fft size and hop must be positive".into()));
    }
    if x.len() < fft_size {
        return Err(Error::SignalTooShort {
            len: x.len(),
            needed: fft_size,
        });
    }
    let padded = reflect_pad(&x.samples, fft_size / 2);
    let frames = 1 + x.len() / hop;
    let bins = fft_size / 2 + 1;
    let window = hann(fft_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut mags = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let seg = &padded[f * hop..f * hop + fft_size];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(f64::from(s) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        mags.extend(buf[..bins].iter().map(|c| c.norm() as f32));
    }
    Ok(Spectrogram {
        mags,
        frames,
        bins,
        fft_size,
        hop,
        window: WindowKind::Hann,
    })
}

fn hz_to_mel(f: f64) -> f64 {
    // Slaney: linear below 1 kHz, logarithmic above
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if f >= MIN_LOG_HZ {
        min_log_mel + (f / MIN_LOG_HZ).ln() / logstep
    } else {
        f / F_SP
    }
}

fn mel_to_hz(m: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if m >= min_log_mel {
        MIN_LOG_HZ * (logstep * (m - min_log_mel)).exp()
    } else {
        m * F_SP
    }
}

/// Triangular mel filterbank with rows normalized to unit sum.
///
/// Rows are stored sparsely as `(first_bin, weights)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub rows: Vec<(usize, Vec<f32>)>,
    pub bins: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Self {
        let bins = cfg.fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let points: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(cfg.sample_rate) / cfg.fft_size as f64;
        let rows = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
                let w: Vec<f64> = (0..bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let up = (f - l) / (c - l);
                        let down = (r - f) / (r - c);
                        up.min(down).max(0.0)
                    })
                    .collect();
                let sum: f64 = w.iter().sum();
                let first = w.iter().position(|&v| v > 0.0).unwrap_or(0);
                let last = w.iter().rposition(|&v| v > 0.0).map_or(0, |p| p + 1);
                let weights = if sum > 0.0 && last > first {
                    w[first..last].iter().map(|&v| (v / sum) as f32).collect()
                } else {
                    Vec::new()
                };
                (first, weights)
            })
            .collect();
        Self { rows, bins }
    }

    /// Dense `[n_mels, bins]` matrix.
    pub fn dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.rows.len() * self.bins];
        for (m, (first, w)) in self.rows.iter().enumerate() {
            out[m * self.bins + first..m * self.bins + first + w.len()].copy_from_slice(w);
        }
        out
    }
}

/// Projects magnitudes onto the mel filterbank.
pub fn mel_project(spec: &Spectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if spec.bins != fb.bins {
        return Err(Error::LengthMismatch {
            what: "spectrogram bins".into(),
            expected: fb.bins,
            found: spec.bins,
        });
    }
    let n_mels = fb.rows.len();
    let mut values = Vec::with_capacity(spec.frames * n_mels);
    for f in 0..spec.frames {
        let frame = spec.frame(f);
        for (first, w) in &fb.rows {
            let s: f32 = w.iter().zip(&frame[*first..]).map(|(a, b)| a * b).sum();
            values.push(s);
        }
    }
    Ok(MelSpectrogram {
        values,
        frames: spec.frames,
        n_mels,
    })
}

/// `log(max(mel(|STFT(x)|), floor))`.
pub fn log_mel(x: &Waveform, cfg: &MelConfig, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    let spec = stft(x, cfg.fft_size, cfg.hop)?;
    let mut mel = mel_project(&spec, fb)?;
    mel.values.iter_mut().for_each(|v| *v = v.max(cfg.log_floor).ln());
    Ok(mel)
}
