mod common;

use common::{rng, small_config};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sifigan::analysis::{
    autocorrelation, estimate_f0, levinson_durbin, log_f0_rmse, lpc_residual, mel_l1, mel_project, reg_loss, rtf,
    rtf_benchmark, stft, vuv_error, LpcConfig, MelConfig, MelFilterbank, Spectrogram, WindowKind,
};
use sifigan::features::synthetic_features;
use sifigan::weights::init_random_weights;
use sifigan::{F0Track, Generator, ModelConfig, Waveform};

fn tone(freq: f64, n: usize, amp: f64) -> Waveform {
    Waveform::new(
        (0..n).map(|t| (amp * (std::f64::consts::TAU * freq * t as f64 / 24000.0).sin()) as f32).collect(),
        24000,
    )
}

fn noise(n: usize, std: f32, seed: u64) -> Waveform {
    let mut r = rng(seed);
    Waveform::new((0..n).map(|_| { let z: f32 = StandardNormal.sample(&mut r); std * z }).collect(), 24000)
}

/// Reflect padding and periodic Hann written out directly.
fn padded_frame(x: &[f32], f: usize, fft: usize, hop: usize) -> Vec<f64> {
    let n = x.len() as isize;
    (0..fft)
        .map(|i| {
            let mut j = (f * hop + i) as isize - (fft / 2) as isize;
            if j < 0 {
                j = -j;
            }
            if j >= n {
                j = 2 * (n - 1) - j;
            }
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / fft as f64).cos();
            f64::from(x[j as usize]) * w
        })
        .collect()
}

fn naive_dft_mag(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in frame.iter().enumerate() {
                let ph = std::f64::consts::TAU * ((k * t) % n) as f64 / n as f64;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Slaney-style triangular filters, unit-sum rows, dense `[mels, bins]`.
fn filterbank_oracle(sr: f64, fft: usize, mels: usize, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
    let to_mel = |f: f64| if f < 1000.0 { 3.0 * f / 200.0 } else { 15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln() };
    let to_hz = |m: f64| if m < 15.0 { 200.0 * m / 3.0 } else { 1000.0 * (6.4f64.ln() * (m - 15.0) / 27.0).exp() };
    let (lo, hi) = (to_mel(fmin), to_mel(fmax));
    let edges: Vec<f64> = (0..mels + 2).map(|i| to_hz(lo + (hi - lo) * i as f64 / (mels + 1) as f64)).collect();
    (0..mels)
        .map(|m| {
            let row: Vec<f64> = (0..=fft / 2)
                .map(|k| {
                    let f = k as f64 * sr / fft as f64;
                    if f <= edges[m] || f >= edges[m + 2] {
                        0.0
                    } else if f <= edges[m + 1] {
                        (f - edges[m]) / (edges[m + 1] - edges[m])
                    } else {
                        (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1])
                    }
                })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
        })
        .collect()
}

#[test]
fn tone_peaks_at_expected_bin() {
    let s = stft(&tone(1000.0, 4800, 0.5), 1024, 120).unwrap();
    // frames whose window lies entirely inside the signal
    for f in 5..s.frames - 5 {
        let frame = s.frame(f);
        let best = (0..s.bins).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
        assert_eq!(best, 43, "frame {f}");
    }
}

#[test]
fn stft_matches_naive_dft_and_parseval() {
    let x = noise(2000, 0.3, 1);
    let s = stft(&x, 1024, 120).unwrap();
    assert_eq!(s.frames, 1 + 2000 / 120);
    for f in [0, 3, s.frames - 1] {
        let frame = padded_frame(&x.samples, f, 1024, 120);
        let mags = naive_dft_mag(&frame);
        for (k, (&a, &b)) in s.frame(f).iter().zip(&mags).enumerate() {
            assert!((f64::from(a) - b).abs() <= 1e-4 * (1.0 + b), "frame {f} bin {k}");
        }
        let energy: f64 = frame.iter().map(|v| v * v).sum();
        let m = s.frame(f);
        let spec_energy: f64 = m
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let p = f64::from(v).powi(2);
                if k == 0 || k == 512 {
                    p
                } else {
                    2.0 * p
                }
            })
            .sum::<f64>()
            / 1024.0;
        assert!((spec_energy - energy).abs() <= 1e-3 * energy, "frame {f}");
    }
}

#[test]
fn filterbank_matches_independent_construction() {
    let cfg = MelConfig::default();
    let fb = MelFilterbank::new(&cfg);
    let dense = fb.dense();
    let oracle = filterbank_oracle(24000.0, 1024, 80, 0.0, 12000.0);
    for (m, row) in oracle.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            assert!((f64::from(dense[m * 513 + k]) - v).abs() <= 1e-6, "mel {m} bin {k}");
        }
    }
}

#[test]
fn single_bin_touches_at_most_two_mels() {
    let fb = MelFilterbank::new(&MelConfig::default());
    for k in 0..513 {
        let mut mags = vec![0.0; 513];
        mags[k] = 1.0;
        let spec = Spectrogram {
            mags,
            frames: 1,
            bins: 513,
            fft_size: 1024,
            hop: 120,
            window: WindowKind::Hann,
        };
        let mel = mel_project(&spec, &fb).unwrap();
        assert!(mel.values.iter().filter(|&&v| v != 0.0).count() <= 2, "bin {k}");
    }
}

#[test]
fn mel_projection_matches_dense_matmul() {
    let fb = MelFilterbank::new(&MelConfig::default());
    let dense = fb.dense();
    let mut r = rng(2);
    let frames = 7;
    let mags: Vec<f32> = (0..frames * 513).map(|_| r.gen_range(0.0..1.0)).collect();
    let spec = Spectrogram {
        mags: mags.clone(),
        frames,
        bins: 513,
        fft_size: 1024,
        hop: 120,
        window: WindowKind::Hann,
    };
    let mel = mel_project(&spec, &fb).unwrap();
    for f in 0..frames {
        for m in 0..80 {
            let want: f64 = (0..513).map(|k| f64::from(dense[m * 513 + k]) * f64::from(mags[f * 513 + k])).sum();
            assert!((f64::from(mel.values[f * 80 + m]) - want).abs() <= 1e-6);
        }
    }
}

#[test]
fn mel_distance_identities() {
    let a = tone(440.0, 4800, 0.3);
    let b = noise(4800, 0.1, 3);
    assert_eq!(mel_l1(&a, &a).unwrap(), 0.0);
    assert_eq!(mel_l1(&a, &b).unwrap(), mel_l1(&b, &a).unwrap());
}

/// Full recomputation: naive DFT, oracle filterbank, floor, log, mean.
fn mel_l1_oracle(a: &Waveform, b: &Waveform) -> f64 {
    let fb = filterbank_oracle(24000.0, 1024, 80, 0.0, 12000.0);
    let frames = 1 + a.len() / 120;
    let logmel = |x: &Waveform, f: usize| -> Vec<f64> {
        let mags = naive_dft_mag(&padded_frame(&x.samples, f, 1024, 120));
        fb.iter()
            .map(|row| row.iter().zip(&mags).map(|(w, m)| w * m).sum::<f64>().max(1e-5).ln())
            .collect()
    };
    let mut total = 0.0;
    for f in 0..frames {
        let (la, lb) = (logmel(a, f), logmel(b, f));
        total += la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    total / (frames * 80) as f64
}

#[test]
fn tone_vs_silence_matches_recomputation() {
    let a = tone(440.0, 1200, 0.5);
    let silence = Waveform::new(vec![0.0; 1200], 24000);
    let got = mel_l1(&a, &silence).unwrap();
    let want = mel_l1_oracle(&a, &silence);
    assert!(got > 1.0);
    assert!((got - want).abs() <= 1e-4 * want, "{got} vs {want}");
    let reg = reg_loss(&silence, &a).unwrap();
    let residual = lpc_residual(&a, &LpcConfig::default()).unwrap();
    assert!((reg - mel_l1_oracle(&residual, &silence)).abs() <= 1e-4 * reg);
}

#[test]
fn levinson_order_one_closed_form() {
    let s = levinson_durbin(&[1.0, 0.5], 1).unwrap();
    assert_eq!(s.coeffs, vec![0.5]);
    assert_eq!(s.error, 0.75);
    let s = levinson_durbin(&[3.0, 1.2, 0.0], 1).unwrap();
    assert_eq!(s.coeffs[0], 1.2 / 3.0);
}

/// Gaussian elimination with partial pivoting on the full Toeplitz system.
fn toeplitz_solve(r: &[f64], p: usize) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = (0..p).map(|j| r[i.abs_diff(j)]).collect();
            row.push(r[i + 1]);
            row
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for i in c + 1..p {
            let f = m[i][c] / m[c][c];
            for j in c..=p {
                m[i][j] -= f * m[c][j];
            }
        }
    }
    let mut a = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| m[i][j] * a[j]).sum();
        a[i] = (m[i][p] - s) / m[i][i];
    }
    a
}

/// Noise shaped by a random all-pole filter with reflection coefficients below 0.9.
fn random_stable_frame(r: &mut rand_chacha::ChaCha8Rng, len: usize) -> Vec<f64> {
    let order = r.gen_range(1..6);
    let mut a: Vec<f64> = Vec::new();
    for _ in 0..order {
        let k: f64 = r.gen_range(-0.9..0.9);
        let prev = a.clone();
        for j in 0..prev.len() {
            a[j] = prev[j] - k * prev[prev.len() - 1 - j];
        }
        a.push(k);
    }
    let mut x = vec![0.0f64; len];
    for t in 0..len {
        let e: f64 = StandardNormal.sample(r);
        x[t] = e + (0..a.len()).filter(|&k| t > k).map(|k| a[k] * x[t - 1 - k]).sum::<f64>();
    }
    let n = len as f64;
    x.iter().enumerate().map(|(i, v)| v * (0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n).cos())).collect()
}

#[test]
fn levinson_matches_toeplitz_solve() {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let frame = random_stable_frame(&mut r, 600);
        let p = 1 + i % 16;
        let acf = autocorrelation(&frame, p);
        let lev = levinson_durbin(&acf, p).unwrap();
        let direct = toeplitz_solve(&acf, p);
        for (a, b) in lev.coeffs.iter().zip(&direct) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-6, "max coefficient diff {worst}");
}

fn flatness(x: &Waveform) -> f64 {
    let s = stft(x, 1024, 120).unwrap();
    let (mut total, mut n) = (0.0, 0);
    for f in 2..s.frames - 2 {
        let p: Vec<f64> = s.frame(f)[1..512].iter().map(|&m| f64::from(m).powi(2) + 1e-20).collect();
        let geo = (p.iter().map(|v| v.ln()).sum::<f64>() / p.len() as f64).exp();
        let arith = p.iter().sum::<f64>() / p.len() as f64;
        total += geo / arith;
        n += 1;
    }
    total / n as f64
}

#[test]
fn white_noise_residual_stays_flat() {
    let x = noise(24000, 0.1, 5);
    let res = lpc_residual(&x, &LpcConfig::default()).unwrap();
    let (fx, fr) = (flatness(&x), flatness(&res));
    assert!((fx - fr).abs() <= 0.05, "flatness {fx} vs {fr}");
    let ex: f64 = x.samples.iter().map(|&v| f64::from(v).powi(2)).sum();
    let er: f64 = res.samples.iter().map(|&v| f64::from(v).powi(2)).sum();
    assert!((er / ex - 1.0).abs() < 0.1, "energy ratio {}", er / ex);
}

#[test]
fn residual_whitens_resonant_signal() {
    let mut r = rng(6);
    let mut x = vec![0.0f32; 24000];
    for t in 2..x.len() {
        let e: f32 = StandardNormal.sample(&mut r);
        x[t] = 0.01 * e + 1.8 * x[t - 1] - 0.9 * x[t - 2];
    }
    let w = Waveform::new(x, 24000);
    let res = lpc_residual(&w, &LpcConfig::default()).unwrap();
    assert!(flatness(&res) > 2.0 * flatness(&w));
}

#[test]
fn regularization_identities() {
    let x = noise(4800, 0.05, 7);
    let x = Waveform::new(
        x.samples.iter().zip(&tone(180.0, 4800, 0.3).samples).map(|(a, b)| a + b).collect(),
        24000,
    );
    let lpc = LpcConfig::default();
    let residual = lpc_residual(&x, &lpc).unwrap();
    assert!(reg_loss(&residual, &x).unwrap().abs() <= 1e-6);

    let e = noise(4800, 0.02, 8);
    let base = reg_loss(&e, &x).unwrap();
    let scale = |w: &Waveform| Waveform::new(w.samples.iter().map(|v| 2.0 * v).collect(), 24000);
    let scaled = reg_loss(&scale(&e), &scale(&x)).unwrap();
    assert!((base - scaled).abs() <= 1e-6, "{base} vs {scaled}");
}

#[test]
fn sine_f0_estimate() {
    let t = estimate_f0(&tone(200.0, 12000, 0.5), 50.0, 1000.0).unwrap();
    assert_eq!(t.len(), 100);
    assert!(t.voicing(0.0).iter().all(|&v| v));
    assert!(t.values.iter().all(|&f| (f - 200.0).abs() <= 2.0), "{:?}", t.values);
}

#[test]
fn noise_and_silence_unvoiced() {
    let t = estimate_f0(&noise(24000, 0.1, 9), 50.0, 1000.0).unwrap();
    let voiced = t.voicing(0.0).iter().filter(|&&v| v).count();
    assert!(voiced * 5 < t.len(), "{voiced} of {} voiced", t.len());
    let t = estimate_f0(&Waveform::new(vec![0.0; 2400], 24000), 50.0, 1000.0).unwrap();
    assert!(t.voicing(0.0).iter().all(|&v| !v));
}

#[test]
fn pitch_metrics() {
    let a = F0Track::new((0..50).map(|i| 100.0 + i as f32).collect(), 200.0);
    let b = F0Track::new(a.values.iter().map(|v| 2.0 * v).collect(), 200.0);
    assert_eq!(log_f0_rmse(&a, &a), Some(0.0));
    assert_eq!(vuv_error(&a, &a), 0.0);
    assert!((log_f0_rmse(&a, &b).unwrap() - std::f64::consts::LN_2).abs() <= 1e-9);
    let half = F0Track::new((0..50).map(|i| if i % 2 == 0 { 120.0 } else { 0.0 }).collect(), 200.0);
    let full = F0Track::new(vec![120.0; 50], 200.0);
    assert_eq!(vuv_error(&half, &full), 50.0);
}

proptest! {
    #[test]
    fn rmse_invariant_to_common_scaling(
        f in proptest::collection::vec(50.0f32..800.0, 1..100),
        g in proptest::collection::vec(50.0f32..800.0, 100),
        e in -3i32..4,
        k in 0.3f32..3.0,
    ) {
        let a = F0Track::new(f.clone(), 200.0);
        let b = F0Track::new(g[..f.len()].to_vec(), 200.0);
        let base = log_f0_rmse(&a, &b).unwrap();
        let p = 2f32.powi(e);
        let scaled = |t: &F0Track, s: f32| F0Track::new(t.values.iter().map(|v| v * s).collect(), 200.0);
        prop_assert!((log_f0_rmse(&scaled(&a, p), &scaled(&b, p)).unwrap() - base).abs() <= 1e-9);
        // arbitrary factors round the scaled values to f32
        prop_assert!((log_f0_rmse(&scaled(&a, k), &scaled(&b, k)).unwrap() - base).abs() <= 1e-6);
    }
}

#[test]
fn rtf_definition() {
    assert_eq!(rtf(5.0, 10.0), 0.5);
}

#[test]
fn wider_model_is_slower() {
    let clips = vec![synthetic_features(200, 40, 3, 0)];
    let narrow_cfg = small_config();
    let wide_cfg = ModelConfig::default();
    let narrow = Generator::new(narrow_cfg.clone(), &init_random_weights(&narrow_cfg, 0)).unwrap();
    let wide = Generator::new(wide_cfg.clone(), &init_random_weights(&wide_cfg, 0)).unwrap();
    let rn = rtf_benchmark(&narrow, &clips, 1, 1, 0).unwrap();
    let rw = rtf_benchmark(&wide, &clips, 1, 1, 0).unwrap();
    assert!(rw.rtf > rn.rtf, "wide {} narrow {}", rw.rtf, rn.rtf);
    assert!(rw.params > rn.params);
    assert!((rw.audio_secs - 1.0).abs() < 1e-9);
    assert!(rw.stages.contains_key("filter.mrf.0"));
}
