//! Real-time-factor measurement.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::features::FeatureSeq;
use crate::generator::{Generator, Probe};
use crate::{Error, Result};

/// RTF and parameter count reported for the reference implementation.
pub const REFERENCE_RTF: f64 = 0.74;
pub const REFERENCE_PARAMS: f64 = 11.3e6;

/// Wall-clock synthesis time over audio duration.
pub fn rtf(synthesis_secs: f64, audio_secs: f64) -> f64 {
    synthesis_secs / audio_secs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub cpu: Option<String>,
    pub logical_cpus: usize,
}

impl HostInfo {
    pub fn detect() -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        });
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            cpu,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub rtf: f64,
    pub params: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub threads: usize,
    pub clips: usize,
    pub warmup_runs: usize,
    pub audio_secs: f64,
    pub synthesis_secs: f64,
    pub rtf: f64,
    /// Seconds per network stage summed over the timed clips.
    pub stages: BTreeMap<String, f64>,
    pub params: usize,
    pub reference: Reference,
    pub host: HostInfo,
}

/// Synthesizes every clip once on a pool of `threads` workers.
///
/// The first clip is run `warmup` extra times before timing starts.
pub fn rtf_benchmark(
    generator: &Generator,
    clips: &[FeatureSeq],
    threads: usize,
    warmup: usize,
    seed: u64,
) -> Result<BenchReport> {
    if clips.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one clip".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    pool.install(|| {
        for _ in 0..warmup {
            generator.synthesize(&clips[0], 1.0, seed)?;
        }
        let mut probe = Probe::default();
        let mut audio_secs = 0.0;
        let start = Instant::now();
        for clip in clips {
            let out = generator.synthesize_probed(clip, 1.0, seed, &mut probe)?;
            audio_secs += out.speech.duration_secs();
        }
        let synthesis_secs = start.elapsed().as_secs_f64();
        Ok(BenchReport {
            threads: threads.max(1),
            clips: clips.len(),
            warmup_runs: warmup,
            audio_secs,
            synthesis_secs,
            rtf: rtf(synthesis_secs, audio_secs),
            stages: probe
                .timings
                .iter()
                .map(|(k, v)| (k.clone(), v.as_secs_f64()))
                .collect(),
            params: generator.num_params(),
            reference: Reference {
                rtf: REFERENCE_RTF,
                params: REFERENCE_PARAMS,
            },
            host: HostInfo::detect(),
        })
    })
}
