//! The source-filter generator.
//!
//! The source network upsamples the conditioning features, mixes in strided
//! embeddings of a sine excitation at every resolution and refines them with
//! pitch-dependent QP-ResBlocks. Its final representation conditions the
//! filter network, a HiFi-GAN generator whose MRF blocks follow each
//! transposed conv. See [`crate::config::InjectionMode`] for the two ways the
//! source features are fed across.

mod blocks;
mod network;

use std::collections::BTreeMap;
use std::time::Duration;

pub use blocks::{mrf_forward, qp_resblock_forward, Mrf, QpResBlock, QpUnit};
pub use network::{FilterNetwork, SourceNetwork, SourceOutput};

use crate::config::{InjectionMode, ModelConfig};
use crate::excitation::{generate_sine, upsample_f0, Waveform};
use crate::features::{transform_f0, FeatureSeq};
use crate::kernels::{compute_dilation_schedule, Dilation};
use crate::weights::{tensor_inventory, WeightStore};
use crate::{Error, FeatureMap, Result};

/// Scale range the model is expected to handle; values outside only warn.
pub const F0_SCALE_RANGE: (f32, f32) = (0.25, 4.0);

/// Optional instrumentation of a forward pass.
#[derive(Debug, Default)]
pub struct Probe {
    /// Wall-clock time per named stage, summed over calls.
    pub timings: BTreeMap<String, Duration>,
    /// Keep a copy of every stage output in `taps`.
    pub capture_taps: bool,
    pub taps: Vec<(String, FeatureMap)>,
}

impl Probe {
    pub fn capturing() -> Self {
        Self {
            capture_taps: true,
            ..Self::default()
        }
    }

    pub(crate) fn record(&mut self, name: &str, elapsed: Duration, map: &FeatureMap) {
        *self.timings.entry(name.to_string()).or_default() += elapsed;
        if self.capture_taps {
            self.taps.push((name.to_string(), map.clone()));
        }
    }

    pub fn tap(&self, name: &str) -> Option<&FeatureMap> {
        self.taps.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Sample-rate sine plus the dilation choice of every QP-ResBlock repetition.
#[derive(Debug, Clone)]
pub struct SourceInputs {
    pub sine: Waveform,
    /// `dilations[stage][repetition]`.
    pub dilations: Vec<Vec<Dilation>>,
}

impl SourceInputs {
    /// Replaces every schedule that is constant over time with the equivalent
    /// fixed-dilation convolution.
    pub fn with_fixed_dilations(&self) -> Option<Self> {
        let dilations = self
            .dilations
            .iter()
            .map(|stage| {
                stage
                    .iter()
                    .map(|d| match d {
                        Dilation::PitchDependent(s) => s.as_constant().map(Dilation::Fixed),
                        Dilation::Fixed(v) => Some(Dilation::Fixed(*v)),
                    })
                    .collect::<Option<Vec<_>>>()
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            sine: self.sine.clone(),
            dilations,
        })
    }
}

/// Builds the sine excitation and per-stage dilation schedules from the
/// (already scaled) continuous F0 of `seq`.
///
/// Stage `i` sees F0 interpolated to its own resolution and uses that
/// resolution's sampling rate in the period formula.
pub fn prepare_source_inputs(cfg: &ModelConfig, seq: &FeatureSeq, seed: u64) -> Result<SourceInputs> {
    let track = seq.f0_track();
    let per_sample = upsample_f0(&track, cfg.hop_size)?;
    let sine = generate_sine(&per_sample, cfg.sample_rate, &cfg.sine, seed)?;
    let mut dilations = Vec::with_capacity(cfg.num_stages());
    for i in 0..cfg.num_stages() {
        let stage_f0 = upsample_f0(&track, cfg.stage_hop(i))?;
        let rate = cfg.stage_rate(i);
        let stage = cfg.qp_dilations[i]
            .iter()
            .map(|&d| {
                let s = compute_dilation_schedule(&stage_f0.values, rate, cfg.dense_factors[i], d)?;
                if s.clamped() > 0 {
                    log::debug!("stage {i}: {} F0 samples raised to the 1 Hz floor", s.clamped());
                }
                Ok(Dilation::PitchDependent(s))
            })
            .collect::<Result<Vec<_>>>()?;
        dilations.push(stage);
    }
    Ok(SourceInputs { sine, dilations })
}

/// Speech and excitation for one utterance.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub speech: Waveform,
    pub excitation: Waveform,
}

/// A loaded model. Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: ModelConfig,
    source: SourceNetwork,
    filter: FilterNetwork,
    num_params: usize,
}

impl Generator {
    pub fn new(cfg: ModelConfig, store: &WeightStore) -> Result<Self> {
        cfg.validate()?;
        store.validate(&cfg)?;
        let source = SourceNetwork::load(&cfg, store)?;
        let filter = FilterNetwork::load(&cfg, store)?;
        let num_params = tensor_inventory(&cfg, cfg.injection)
            .values()
            .map(|s| s.iter().product::<usize>())
            .sum();
        Ok(Self {
            cfg,
            source,
            filter,
            num_params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn injection(&self) -> InjectionMode {
        self.filter.injection()
    }

    /// Parameters used by this wiring (unused tensors in the store excluded).
    pub fn num_params(&self) -> usize {
        self.num_params
    }

    fn check_features(&self, seq: &FeatureSeq) -> Result<()> {
        seq.validate()?;
        let dims = seq.mgc_dims + seq.bap_dims;
        if dims != self.cfg.in_channels {
            return Err(Error::Config(format!(
                "model expects {} conditioning dims, features have {} (mgc {} + bap {})",
                self.cfg.in_channels, dims, seq.mgc_dims, seq.bap_dims
            )));
        }
        if (seq.frame_shift_ms - self.cfg.frame_shift_ms).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "features use a {} ms frame shift, model expects {} ms",
                seq.frame_shift_ms, self.cfg.frame_shift_ms
            )));
        }
        if seq.frames() == 0 {
            return Err(Error::InvalidArgument("feature sequence has no frames".into()));
        }
        Ok(())
    }

    pub fn conditioning(&self, seq: &FeatureSeq) -> Result<FeatureMap> {
        seq.conditioning(self.cfg.feature_stats.as_ref())
    }

    pub fn source_forward(&self, cond: &FeatureMap, inputs: &SourceInputs, probe: &mut Probe) -> Result<SourceOutput> {
        if cond.channels() != self.cfg.in_channels {
            return Err(Error::ShapeMismatch {
                name: "conditioning".into(),
                expected: vec![self.cfg.in_channels, cond.len()],
                found: vec![cond.channels(), cond.len()],
            });
        }
        self.source.forward(cond, &inputs.sine, &inputs.dilations, probe)
    }

    pub fn filter_forward(&self, cond: &FeatureMap, source: &SourceOutput, probe: &mut Probe) -> Result<Waveform> {
        self.filter.forward(cond, source, probe)
    }

    /// Full pipeline: scale cF0, rebuild sine and schedules, run both networks.
    pub fn synthesize(&self, seq: &FeatureSeq, f0_scale: f32, seed: u64) -> Result<Synthesis> {
        self.synthesize_probed(seq, f0_scale, seed, &mut Probe::default())
    }

    pub fn synthesize_probed(&self, seq: &FeatureSeq, f0_scale: f32, seed: u64, probe: &mut Probe) -> Result<Synthesis> {
        if !(f0_scale > 0.0) || !f0_scale.is_finite() {
            return Err(Error::InvalidArgument(format!("F0 scale must be positive, got {f0_scale}")));
        }
        if f0_scale < F0_SCALE_RANGE.0 || f0_scale > F0_SCALE_RANGE.1 {
            log::warn!(
                "F0 scale {f0_scale} is outside [{}, {}]",
                F0_SCALE_RANGE.0,
                F0_SCALE_RANGE.1
            );
        }
        self.check_features(seq)?;
        let scaled = transform_f0(seq, f0_scale)?;
        let inputs = prepare_source_inputs(&self.cfg, &scaled, seed)?;
        let cond = self.conditioning(&scaled)?;
        let source = self.source_forward(&cond, &inputs, probe)?;
        let speech = self.filter_forward(&cond, &source, probe)?;
        Ok(Synthesis {
            speech,
            excitation: source.excitation,
        })
    }
}
