//! Source and filter networks.

use std::time::Instant;

use super::blocks::{load_conv, mrf_forward, qp_resblock_forward, Mrf, QpResBlock};
use super::Probe;
use crate::config::{InjectionMode, ModelConfig};
use crate::excitation::Waveform;
use crate::kernels::{leaky_relu, tanh_act, Conv1d, ConvSpec, Dilation, Padding, TransposedConv1d, TransposedSpec};
use crate::weights::WeightStore;
use crate::{Error, FeatureMap, Result};

fn load_transposed(store: &WeightStore, name: &str, spec: TransposedSpec) -> Result<TransposedConv1d> {
    let w = store.expect(&format!("{name}.weight"), &spec.weight_shape())?;
    let b = store.expect(&format!("{name}.bias"), &[spec.out_channels])?;
    spec.validate()?;
    Ok(TransposedConv1d {
        name: name.to_string(),
        spec,
        weight: w.data.clone(),
        bias: b.data.clone(),
    })
}

/// Strided conv taking a sample-rate signal to the resolution of stage `i`:
/// stride = remaining upsampling factor, kernel = 2*stride + 1.
fn downsampler(in_channels: usize, out_channels: usize, stride: usize) -> ConvSpec {
    ConvSpec {
        in_channels,
        out_channels,
        kernel_size: 2 * stride + 1,
        stride,
        dilation: 1,
        padding: Padding::Zero(stride),
    }
}

fn record(probe: &mut Probe, name: &str, start: Instant, map: &FeatureMap) {
    probe.record(name, start.elapsed(), map);
}

#[derive(Debug, Clone)]
struct SourceStage {
    up: TransposedConv1d,
    sine_emb: Conv1d,
    qp: QpResBlock,
}

/// Sine-driven upsampling network producing the excitation signal.
#[derive(Debug, Clone)]
pub struct SourceNetwork {
    input: Conv1d,
    stages: Vec<SourceStage>,
    head: Conv1d,
    slope: f32,
    hop: usize,
    sample_rate: u32,
}

/// Excitation plus the per-stage source representations.
#[derive(Debug, Clone)]
pub struct SourceOutput {
    pub excitation: Waveform,
    /// Output of every stage's QP-ResBlock; the last one is the final representation.
    pub stage_outputs: Vec<FeatureMap>,
}

impl SourceOutput {
    pub fn final_rep(&self) -> &FeatureMap {
        self.stage_outputs.last().expect("at least one stage")
    }
}

impl SourceNetwork {
    pub fn load(cfg: &ModelConfig, store: &WeightStore) -> Result<Self> {
        let s = &cfg.source_channels;
        let input = load_conv(
            store,
            "source.input",
            ConvSpec::same(cfg.in_channels, s[0], cfg.input_kernel_size, 1),
        )?;
        let stages = cfg
            .upsample_rates
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                Ok(SourceStage {
                    up: load_transposed(store, &format!("source.up.{i}"), TransposedSpec::upsample(s[i], s[i + 1], r))?,
                    sine_emb: load_conv(
                        store,
                        &format!("source.sine_emb.{i}"),
                        downsampler(1, s[i + 1], cfg.remaining_factor(i)),
                    )?,
                    qp: QpResBlock::load(
                        store,
                        &format!("source.qp.{i}"),
                        s[i + 1],
                        cfg.qp_kernel_size,
                        cfg.qp_dilations[i].len(),
                        cfg.leaky_slope,
                    )?,
                })
            })
            .collect::<Result<_>>()?;
        let n = cfg.num_stages();
        let head = load_conv(store, "source.head", ConvSpec::same(s[n], 1, cfg.output_kernel_size, 1))?;
        Ok(Self {
            input,
            stages,
            head,
            slope: cfg.leaky_slope,
            hop: cfg.hop_size,
            sample_rate: cfg.sample_rate,
        })
    }

    /// `cond` is `[in_channels, frames]`; `sine` must hold `frames * hop` samples
    /// and `dilations[i]` one entry per repetition of stage `i`'s QP-ResBlock.
    pub fn forward(
        &self,
        cond: &FeatureMap,
        sine: &Waveform,
        dilations: &[Vec<Dilation>],
        probe: &mut Probe,
    ) -> Result<SourceOutput> {
        let frames = cond.len();
        if sine.len() != frames * self.hop {
            return Err(Error::LengthMismatch {
                what: "sine excitation".into(),
                expected: frames * self.hop,
                found: sine.len(),
            });
        }
        if dilations.len() != self.stages.len() {
            return Err(Error::LengthMismatch {
                what: "per-stage dilation lists".into(),
                expected: self.stages.len(),
                found: dilations.len(),
            });
        }
        let sine_map = FeatureMap::from_signal(&sine.samples);

        let t = Instant::now();
        let mut x = self.input.forward(cond)?;
        record(probe, "source.input", t, &x);

        let mut stage_outputs = Vec::with_capacity(self.stages.len());
        for (i, (stage, dils)) in self.stages.iter().zip(dilations).enumerate() {
            let t = Instant::now();
            x = stage.up.forward(&leaky_relu(&x, self.slope))?;
            record(probe, &format!("source.up.{i}"), t, &x);

            let t = Instant::now();
            let emb = stage.sine_emb.forward(&sine_map)?;
            x.add_assign(&emb)?;
            record(probe, &format!("source.sine_emb.{i}"), t, &x);

            for d in dils {
                if let Dilation::PitchDependent(s) = d {
                    if s.len() != x.len() {
                        return Err(Error::LengthMismatch {
                            what: format!("stage {i} dilation schedule"),
                            expected: x.len(),
                            found: s.len(),
                        });
                    }
                }
            }
            let t = Instant::now();
            x = qp_resblock_forward(&x, &stage.qp, dils)?;
            record(probe, &format!("source.qp.{i}"), t, &x);
            stage_outputs.push(x.clone());
        }

        let t = Instant::now();
        let e = self.head.forward(&leaky_relu(&x, self.slope))?;
        record(probe, "source.head", t, &e);
        Ok(SourceOutput {
            excitation: Waveform::new(e.into_vec(), self.sample_rate),
            stage_outputs,
        })
    }
}

#[derive(Debug, Clone)]
struct FilterStage {
    up: TransposedConv1d,
    inject: Option<Conv1d>,
    mrf: Mrf,
}

/// HiFi-GAN style resonance network conditioned on the source representation.
#[derive(Debug, Clone)]
pub struct FilterNetwork {
    input: Conv1d,
    stages: Vec<FilterStage>,
    output: Conv1d,
    slope: f32,
    injection: InjectionMode,
    sample_rate: u32,
}

impl FilterNetwork {
    pub fn load(cfg: &ModelConfig, store: &WeightStore) -> Result<Self> {
        let f = &cfg.filter_channels;
        let n = cfg.num_stages();
        let src_out = cfg.source_channels[n];
        let input = load_conv(
            store,
            "filter.input",
            ConvSpec::same(cfg.in_channels, f[0], cfg.input_kernel_size, 1),
        )?;
        let stages = cfg
            .upsample_rates
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let inject = match cfg.injection {
                    InjectionMode::Downsampled => Some(load_conv(
                        store,
                        &format!("filter.inject.{i}"),
                        downsampler(src_out, f[i + 1], cfg.remaining_factor(i)),
                    )?),
                    InjectionMode::Direct => None,
                };
                Ok(FilterStage {
                    up: load_transposed(store, &format!("filter.up.{i}"), TransposedSpec::upsample(f[i], f[i + 1], r))?,
                    inject,
                    mrf: Mrf::load(
                        store,
                        &format!("filter.mrf.{i}"),
                        f[i + 1],
                        &cfg.mrf_kernel_sizes,
                        &cfg.mrf_dilations,
                        cfg.leaky_slope,
                    )?,
                })
            })
            .collect::<Result<_>>()?;
        let output = load_conv(store, "filter.output", ConvSpec::same(f[n], 1, cfg.output_kernel_size, 1))?;
        Ok(Self {
            input,
            stages,
            output,
            slope: cfg.leaky_slope,
            injection: cfg.injection,
            sample_rate: cfg.sample_rate,
        })
    }

    pub fn injection(&self) -> InjectionMode {
        self.injection
    }

    pub fn forward(&self, cond: &FeatureMap, source: &SourceOutput, probe: &mut Probe) -> Result<Waveform> {
        if source.stage_outputs.len() != self.stages.len() {
            return Err(Error::LengthMismatch {
                what: "source stage outputs".into(),
                expected: self.stages.len(),
                found: source.stage_outputs.len(),
            });
        }
        let t = Instant::now();
        let mut y = self.input.forward(cond)?;
        record(probe, "filter.input", t, &y);

        let rep = source.final_rep();
        for (i, stage) in self.stages.iter().enumerate() {
            let t = Instant::now();
            y = stage.up.forward(&leaky_relu(&y, self.slope))?;
            record(probe, &format!("filter.up.{i}"), t, &y);

            let t = Instant::now();
            match &stage.inject {
                Some(conv) => {
                    let inj = conv.forward(rep)?;
                    if inj.channels() != y.channels() || inj.len() != y.len() {
                        return Err(Error::ShapeMismatch {
                            name: format!("filter.inject.{i} output"),
                            expected: vec![y.channels(), y.len()],
                            found: vec![inj.channels(), inj.len()],
                        });
                    }
                    y.add_assign(&inj)?;
                }
                None => y.add_leading_channels(&source.stage_outputs[i])?,
            }
            record(probe, &format!("filter.inject.{i}"), t, &y);

            let t = Instant::now();
            y = mrf_forward(&y, &stage.mrf)?;
            record(probe, &format!("filter.mrf.{i}"), t, &y);
        }

        let t = Instant::now();
        let out = tanh_act(&self.output.forward(&leaky_relu(&y, self.slope))?);
        record(probe, "filter.output", t, &out);
        Ok(Waveform::new(out.into_vec(), self.sample_rate))
    }
}
