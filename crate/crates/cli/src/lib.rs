//! Batch front end: argument definitions and command implementations.
//!
//! Every command returns a JSON value for stdout plus a list of per-utterance
//! failures; `main` turns the latter into the exit status.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use sifigan::analysis::{
    estimate_f0_with, log_f0_rmse, lpc_residual, reg_loss_with, rtf_benchmark, vuv_error, F0EstimatorConfig,
    LpcConfig, MelAnalyzer, MelConfig,
};
use sifigan::analysis::bench::REFERENCE_PARAMS;
use sifigan::audio::{normalize_rms, read_wav, write_wav, write_wav_pcm16};
use sifigan::checkpoint::{load_weights, read_weights, save_weights};
use sifigan::config::load_config;
use sifigan::features::{load_feature_bundle, save_feature_bundle, synthetic_features};
use sifigan::weights::{init_random_weights, zero_weights};
use sifigan::{count_params, FeatureSeq, Generator, InjectionMode, ModelConfig, Probe, Waveform};

#[derive(Debug, Parser)]
#[command(name = "sifigan", version, about = "Source-filter HiFi-GAN vocoder on the CPU")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize speech from feature bundles.
    Synth(SynthArgs),
    /// Write the source-network excitation of each bundle.
    Excite(RunArgs),
    /// Objective metrics between reference and generated WAVs.
    Eval(EvalArgs),
    /// Real-time-factor benchmark.
    Bench(BenchArgs),
    /// Summarize a weights file.
    Inspect(InspectArgs),
    /// Write a randomly initialized (or all-zero) weights file.
    Init(InitArgs),
    /// Print the built-in model config.
    DefaultConfig,
    /// Write a synthetic feature bundle.
    SyntheticFeatures(SyntheticArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model config JSON; the built-in default when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `.sfgw` weights file.
    #[arg(long)]
    pub weights: PathBuf,
    /// Override the config's injection mode.
    #[arg(long)]
    pub injection: Option<InjectionMode>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Feature bundle directories.
    #[arg(long, num_args = 1.., required = true)]
    pub features: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub f0_scale: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Utterances processed concurrently. Never changes the samples.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write dithered 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Rescale each output to this RMS level in dBFS.
    #[arg(long, allow_hyphen_values = true)]
    pub normalize_db: Option<f64>,
    /// Write every intermediate feature map as raw f32 next to the WAV.
    #[arg(long)]
    pub dump_stages: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub reference: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub generated: Vec<PathBuf>,
    /// Excitation WAVs for the source regularization metric. Without them the
    /// LPC residual of each generated file stands in.
    #[arg(long, num_args = 1..)]
    pub excitation: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Weights file; random weights when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub injection: Option<InjectionMode>,
    /// Feature bundles to synthesize; synthetic clips when omitted.
    #[arg(long, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Total synthetic audio when no bundles are given.
    #[arg(long, default_value_t = 60.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 7.5)]
    pub clip_seconds: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Also validate against this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub zero: bool,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Result of one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub report: Value,
    /// `(utterance, error)` for every utterance that failed.
    pub failures: Vec<(String, String)>,
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Excite(a) => cmd_excite(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Inspect(a) => cmd_inspect(&a),
        Command::Init(a) => cmd_init(&a),
        Command::DefaultConfig => Ok(Outcome {
            report: serde_json::to_value(ModelConfig::default())?,
            failures: Vec::new(),
        }),
        Command::SyntheticFeatures(a) => cmd_synthetic(&a),
    }
}

fn config_or_default(path: Option<&Path>, injection: Option<InjectionMode>) -> anyhow::Result<ModelConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ModelConfig::default(),
    };
    if let Some(mode) = injection {
        cfg.injection = mode;
        cfg.validate()?;
    }
    Ok(cfg)
}

pub fn load_generator(model: &ModelArgs) -> anyhow::Result<Generator> {
    let cfg = config_or_default(model.config.as_deref(), model.injection)?;
    let store = load_weights(&model.weights, &cfg).with_context(|| format!("loading weights {}", model.weights.display()))?;
    Ok(Generator::new(cfg, &store)?)
}

fn utterance_names(dirs: &[PathBuf]) -> anyhow::Result<Vec<String>> {
    let names: Vec<String> = dirs
        .iter()
        .map(|d| {
            d.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .with_context(|| format!("feature path {} has no directory name", d.display()))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for n in &names {
        if !seen.insert(n) {
            bail!("two feature bundles are both named {n:?}");
        }
    }
    Ok(names)
}

fn write_audio(w: &Waveform, path: &Path, pcm16: bool, seed: u64) -> anyhow::Result<usize> {
    Ok(if pcm16 {
        write_wav_pcm16(w, path, seed)?
    } else {
        write_wav(w, path)?
    })
}

#[derive(Debug, Serialize)]
struct ClipStats {
    samples: usize,
    duration_secs: f64,
    peak: f32,
    rms: f64,
    clipped: usize,
}

fn clip_stats(w: &Waveform, clipped: usize) -> ClipStats {
    let energy: f64 = w.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    ClipStats {
        samples: w.len(),
        duration_secs: w.duration_secs(),
        peak: w.samples.iter().fold(0.0f32, |m, s| m.max(s.abs())),
        rms: if w.is_empty() { 0.0 } else { (energy / w.len() as f64).sqrt() },
        clipped,
    }
}

/// Runs `f` over every bundle on a pool of `jobs` workers, in input order.
fn for_each_utterance<F>(dirs: &[PathBuf], jobs: usize, f: F) -> anyhow::Result<(Vec<Value>, Vec<(String, String)>)>
where
    F: Fn(&str, &FeatureSeq) -> anyhow::Result<Value> + Sync,
{
    let names = utterance_names(dirs)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<anyhow::Result<Value>> = pool.install(|| {
        dirs.par_iter()
            .zip(&names)
            .map(|(dir, name)| {
                let seq = load_feature_bundle(dir).with_context(|| format!("loading {}", dir.display()))?;
                f(name, &seq)
            })
            .collect()
    });
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in names.into_iter().zip(results) {
        match r {
            Ok(v) => done.push(v),
            Err(e) => failures.push((name, format!("{e:#}"))),
        }
    }
    Ok((done, failures))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn dump_stages(probe: &Probe, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut index = BTreeMap::new();
    for (name, map) in &probe.taps {
        let bytes: Vec<u8> = map.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(dir.join(format!("{name}.f32")), bytes)?;
        index.insert(name.clone(), json!({"channels": map.channels(), "len": map.len(), "dtype": "f32le"}));
    }
    write_json(&dir.join("index.json"), &index)
}

pub fn cmd_synth(a: &SynthArgs) -> anyhow::Result<Outcome> {
    let r = &a.run;
    let g = load_generator(&r.model)?;
    std::fs::create_dir_all(&r.out).with_context(|| format!("creating {}", r.out.display()))?;
    let (done, failures) = for_each_utterance(&r.features, r.jobs, |name, seq| {
        let start = Instant::now();
        let mut probe = if a.dump_stages { Probe::capturing() } else { Probe::default() };
        let mut out = g.synthesize_probed(seq, r.f0_scale, r.seed, &mut probe)?;
        log::info!("{name}: {} frames in {:.3} s", seq.frames(), start.elapsed().as_secs_f64());
        if let Some(db) = a.normalize_db {
            normalize_rms(&mut out.speech, db);
        }
        let wav = r.out.join(format!("{name}.wav"));
        let clipped = write_audio(&out.speech, &wav, r.pcm16, r.seed)?;
        if clipped > 0 {
            log::warn!("{name}: {clipped} samples outside [-1, 1]");
        }
        if a.dump_stages {
            dump_stages(&probe, &r.out.join(format!("{name}.stages")))?;
        }
        let report = json!({
            "utterance": name,
            "wav": wav,
            "frames": seq.frames(),
            "sample_rate": out.speech.sample_rate,
            "f0_scale": r.f0_scale,
            "seed": r.seed,
            "injection": g.injection(),
            "speech": clip_stats(&out.speech, clipped),
            "excitation": clip_stats(&out.excitation, 0),
        });
        write_json(&r.out.join(format!("{name}.json")), &report)?;
        Ok(report)
    })?;
    Ok(Outcome {
        report: json!({ "utterances": done, "failed": failures.len() }),
        failures,
    })
}

pub fn cmd_excite(r: &RunArgs) -> anyhow::Result<Outcome> {
    let g = load_generator(&r.model)?;
    std::fs::create_dir_all(&r.out).with_context(|| format!("creating {}", r.out.display()))?;
    let (done, failures) = for_each_utterance(&r.features, r.jobs, |name, seq| {
        let scaled = sifigan::features::transform_f0(seq, r.f0_scale)?;
        let inputs = sifigan::generator::prepare_source_inputs(g.config(), &scaled, r.seed)?;
        let cond = g.conditioning(&scaled)?;
        let source = g.source_forward(&cond, &inputs, &mut Probe::default())?;
        let wav = r.out.join(format!("{name}.excitation.wav"));
        let clipped = write_audio(&source.excitation, &wav, r.pcm16, r.seed)?;
        Ok(json!({
            "utterance": name,
            "wav": wav,
            "frames": seq.frames(),
            "excitation": clip_stats(&source.excitation, clipped),
        }))
    })?;
    Ok(Outcome {
        report: json!({ "utterances": done, "failed": failures.len() }),
        failures,
    })
}

/// The four objective metrics for one pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    pub mel_l1: f64,
    pub reg_loss: f64,
    pub log_f0_rmse: Option<f64>,
    pub vuv_error: f64,
}

/// Metrics between `reference` and `generated`; the source term compares the
/// reference LPC residual with `excitation`, or with the generated residual
/// when no excitation is given.
pub fn pair_metrics(reference: &Waveform, generated: &Waveform, excitation: Option<&Waveform>) -> anyhow::Result<PairMetrics> {
    for w in [Some(generated), excitation].into_iter().flatten() {
        if w.sample_rate != reference.sample_rate {
            bail!("sample rates differ: {} vs {}", reference.sample_rate, w.sample_rate);
        }
    }
    let mel = MelAnalyzer::new(MelConfig {
        sample_rate: reference.sample_rate,
        ..MelConfig::default()
    });
    let lpc = LpcConfig::default();
    let exc = match excitation {
        Some(e) => e.clone(),
        None => lpc_residual(generated, &lpc)?,
    };
    let f0_cfg = F0EstimatorConfig::default();
    let (f_ref, f_gen) = (estimate_f0_with(reference, &f0_cfg)?, estimate_f0_with(generated, &f0_cfg)?);
    Ok(PairMetrics {
        mel_l1: mel.l1(reference, generated)?,
        reg_loss: reg_loss_with(&exc, reference, &mel, &lpc)?,
        log_f0_rmse: log_f0_rmse(&f_ref, &f_gen),
        vuv_error: vuv_error(&f_ref, &f_gen),
    })
}

fn truncate_to(w: &mut Waveform, len: usize) {
    w.samples.truncate(len);
}

pub fn cmd_eval(a: &EvalArgs) -> anyhow::Result<Outcome> {
    if a.reference.len() != a.generated.len() {
        bail!("{} reference files but {} generated files", a.reference.len(), a.generated.len());
    }
    if !a.excitation.is_empty() && a.excitation.len() != a.generated.len() {
        bail!("{} excitation files for {} pairs", a.excitation.len(), a.generated.len());
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut all = Vec::new();
    for (i, (rp, gp)) in a.reference.iter().zip(&a.generated).enumerate() {
        let label = gp.display().to_string();
        let result = (|| -> anyhow::Result<PairMetrics> {
            let mut r = read_wav(rp).with_context(|| format!("reading {}", rp.display()))?;
            let mut g = read_wav(gp).with_context(|| format!("reading {}", gp.display()))?;
            let mut e = match a.excitation.get(i) {
                Some(p) => Some(read_wav(p).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            let len = r.len().min(g.len()).min(e.as_ref().map_or(usize::MAX, |e| e.len()));
            if r.len() != len || g.len() != len || e.as_ref().is_some_and(|e| e.len() != len) {
                log::warn!("{label}: lengths differ, comparing the first {len} samples");
            }
            truncate_to(&mut r, len);
            truncate_to(&mut g, len);
            if let Some(e) = e.as_mut() {
                truncate_to(e, len);
            }
            pair_metrics(&r, &g, e.as_ref())
        })();
        match result {
            Ok(m) => {
                rows.push(json!({"reference": rp, "generated": gp, "metrics": &m}));
                all.push(m);
            }
            Err(e) => failures.push((label, format!("{e:#}"))),
        }
    }
    let n = all.len().max(1) as f64;
    let rmse: Vec<f64> = all.iter().filter_map(|m| m.log_f0_rmse).collect();
    let mean = json!({
        "mel_l1": all.iter().map(|m| m.mel_l1).sum::<f64>() / n,
        "reg_loss": all.iter().map(|m| m.reg_loss).sum::<f64>() / n,
        "log_f0_rmse": (!rmse.is_empty()).then(|| rmse.iter().sum::<f64>() / rmse.len() as f64),
        "vuv_error": all.iter().map(|m| m.vuv_error).sum::<f64>() / n,
    });
    Ok(Outcome {
        report: json!({ "pairs": rows, "mean": mean, "failed": failures.len() }),
        failures,
    })
}

pub fn cmd_bench(a: &BenchArgs) -> anyhow::Result<Outcome> {
    let cfg = config_or_default(a.config.as_deref(), a.injection)?;
    let store = match &a.weights {
        Some(p) => load_weights(p, &cfg)?,
        None => init_random_weights(&cfg, a.seed),
    };
    let g = Generator::new(cfg.clone(), &store)?;
    let clips: Vec<FeatureSeq> = if a.features.is_empty() {
        if !(a.clip_seconds > 0.0 && a.seconds > 0.0) {
            bail!("--seconds and --clip-seconds must be positive");
        }
        let frames_per_clip = (a.clip_seconds * cfg.frame_rate()).round() as usize;
        let total = (a.seconds * cfg.frame_rate()).round() as usize;
        let dims = cfg.in_channels;
        (0..total.div_ceil(frames_per_clip))
            .map(|i| {
                let n = frames_per_clip.min(total - i * frames_per_clip);
                synthetic_features(n, dims.saturating_sub(3), dims.min(3), a.seed + i as u64)
            })
            .collect()
    } else {
        a.features
            .iter()
            .map(|d| load_feature_bundle(d).with_context(|| format!("loading {}", d.display())))
            .collect::<anyhow::Result<_>>()?
    };
    let report = rtf_benchmark(&g, &clips, a.threads, a.warmup, a.seed)?;
    Ok(Outcome {
        report: serde_json::to_value(report)?,
        failures: Vec::new(),
    })
}

pub fn cmd_inspect(a: &InspectArgs) -> anyhow::Result<Outcome> {
    let store = read_weights(&a.weights).with_context(|| format!("reading {}", a.weights.display()))?;
    let mut by_module: BTreeMap<String, usize> = BTreeMap::new();
    for (name, t) in store.iter() {
        let module = name.split('.').take(2).collect::<Vec<_>>().join(".");
        *by_module.entry(module).or_default() += t.numel();
    }
    let mut report = json!({
        "file": a.weights,
        "tensors": store.len(),
        "params": count_params(&store),
        "reference_params": REFERENCE_PARAMS,
        "by_module": by_module,
    });
    if let Some(path) = &a.config {
        let cfg = load_config(path)?;
        report["config"] = match Generator::new(cfg, &store) {
            Ok(g) => json!({"valid": true, "active_params": g.num_params(), "injection": g.injection()}),
            Err(e) => json!({"valid": false, "error": e.to_string()}),
        };
    }
    Ok(Outcome {
        report,
        failures: Vec::new(),
    })
}

pub fn cmd_init(a: &InitArgs) -> anyhow::Result<Outcome> {
    let cfg = config_or_default(a.config.as_deref(), None)?;
    let store = if a.zero { zero_weights(&cfg) } else { init_random_weights(&cfg, a.seed) };
    save_weights(&store, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(Outcome {
        report: json!({"out": a.out, "tensors": store.len(), "params": count_params(&store)}),
        failures: Vec::new(),
    })
}

pub fn cmd_synthetic(a: &SyntheticArgs) -> anyhow::Result<Outcome> {
    let cfg = config_or_default(a.config.as_deref(), None)?;
    if a.frames == 0 {
        bail!("--frames must be positive");
    }
    let dims = cfg.in_channels;
    let mut seq = synthetic_features(a.frames, dims.saturating_sub(3), dims.min(3), a.seed);
    seq.frame_shift_ms = cfg.frame_shift_ms;
    save_feature_bundle(&seq, &a.out)?;
    Ok(Outcome {
        report: json!({"out": a.out, "frames": a.frames, "duration_secs": seq.duration_secs()}),
        failures: Vec::new(),
    })
}
