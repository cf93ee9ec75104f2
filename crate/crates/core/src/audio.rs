//! Mono WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::excitation::Waveform;
use crate::{Error, Result};

/// Writes 32-bit IEEE-float mono samples; returns how many exceed `[-1, 1]`.
///
/// Samples are stored unmodified, so reading back is bit-exact.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<usize> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    let mut clipped = 0;
    for &s in &w.samples {
        if s.abs() > 1.0 {
            clipped += 1;
        }
        writer.write_sample(s)?;
    }
    writer.finalize()?;
    Ok(clipped)
}

/// Writes 16-bit PCM with seeded triangular dither; returns the clipped count.
pub fn write_wav_pcm16(w: &Waveform, path: impl AsRef<Path>, seed: u64) -> Result<usize> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut writer = WavWriter::create(path, spec)?;
    let mut clipped = 0;
    for &s in &w.samples {
        let dither: f32 = rng.gen::<f32>() - rng.gen::<f32>();
        let q = (s * 32767.0 + dither).round();
        if s.abs() > 1.0 || !(-32768.0..=32767.0).contains(&q) {
            clipped += 1;
        }
        writer.write_sample(q.clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(clipped)
}

/// Reads a mono WAV as `f32`; integer formats are scaled to `[-1, 1)`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected mono audio, file has {} channels",
            spec.channels
        )));
    }
    let samples = match spec.sample_format {
        SampleFormat::Float => reader.samples::<f32>().collect::<Result<Vec<_>, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Rescales `w` so its RMS sits at `target_db` dBFS. Silent input is left alone.
pub fn normalize_rms(w: &mut Waveform, target_db: f64) {
    let energy: f64 = w.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    if energy == 0.0 || w.samples.is_empty() {
        return;
    }
    let rms = (energy / w.samples.len() as f64).sqrt();
    let gain = (10f64.powf(target_db / 20.0) / rms) as f32;
    w.samples.iter_mut().for_each(|s| *s *= gain);
}
