use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sifigan::analysis::{lpc_residual, mel_l1, reg_loss, LpcConfig};
use sifigan::audio::read_wav;
use sifigan::checkpoint::{read_weights, save_weights};
use sifigan::config::save_config;
use sifigan::features::{save_feature_bundle, synthetic_features};
use sifigan::weights::{init_random_weights, zero_weights};
use sifigan::{count_params, Generator, ModelConfig, Probe};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sifigan"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "sifigan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        filter_channels: vec![64, 32, 16, 8, 4],
        source_channels: vec![32, 16, 8, 4, 2],
        ..ModelConfig::default()
    }
}

struct Fixture {
    dir: tempfile::TempDir,
    cfg: ModelConfig,
}

impl Fixture {
    fn new(zero: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        save_config(&cfg, dir.path().join("config.json")).unwrap();
        let store = if zero { zero_weights(&cfg) } else { init_random_weights(&cfg, 7) };
        save_weights(&store, dir.path().join("w.sfgw")).unwrap();
        for (name, frames) in [("a", 40), ("b", 25), ("c", 13)] {
            save_feature_bundle(&synthetic_features(frames, 40, 3, frames as u64), dir.path().join(name)).unwrap();
        }
        Self { dir, cfg }
    }

    fn p(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }

    fn synth(&self, out: &str, extra: &[&str]) -> Output {
        let (c, w, o) = (self.p("config.json"), self.p("w.sfgw"), self.p(out));
        let (a, b, cc) = (self.p("a"), self.p("b"), self.p("c"));
        let mut args = vec!["synth", "--config", &c, "--weights", &w, "--features", &a, &b, &cc, "--out", &o];
        args.extend_from_slice(extra);
        run(&args)
    }
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn synth_lengths_and_library_parity() {
    let fx = Fixture::new(false);
    let report = json(&fx.synth("out", &["--seed", "5"]));
    assert_eq!(report["utterances"].as_array().unwrap().len(), 3);
    let store = read_weights(fx.p("w.sfgw")).unwrap();
    let g = Generator::new(fx.cfg.clone(), &store).unwrap();
    for (name, frames) in [("a", 40usize), ("b", 25), ("c", 13)] {
        let wav = read_wav(fx.p(&format!("out/{name}.wav"))).unwrap();
        assert_eq!(wav.len(), frames * 120);
        let seq = sifigan::features::load_feature_bundle(fx.p(name)).unwrap();
        let lib = g.synthesize(&seq, 1.0, 5).unwrap();
        assert_eq!(wav.samples, lib.speech.samples, "{name}");
        let meta: Value = serde_json::from_slice(&bytes(fx.p(&format!("out/{name}.json")))).unwrap();
        assert_eq!(meta["frames"], frames);
        assert_eq!(meta["speech"]["samples"], frames * 120);
    }
}

#[test]
fn synth_is_deterministic_across_runs_and_jobs() {
    let fx = Fixture::new(false);
    fx.synth("one", &["--jobs", "1"]);
    fx.synth("two", &["--jobs", "1"]);
    fx.synth("four", &["--jobs", "4"]);
    for name in ["a", "b", "c"] {
        let f = format!("{name}.wav");
        let first = bytes(fx.p(&format!("one/{f}")));
        assert_eq!(first, bytes(fx.p(&format!("two/{f}"))));
        assert_eq!(first, bytes(fx.p(&format!("four/{f}"))));
    }
}

#[test]
fn transformation_scales_complete() {
    let fx = Fixture::new(false);
    for scale in ["0.5", "2.0"] {
        let out = format!("s{scale}");
        fx.synth(&out, &["--f0-scale", scale]);
        assert_eq!(read_wav(fx.p(&format!("{out}/a.wav"))).unwrap().len(), 4800);
    }
}

#[test]
fn pcm16_and_normalization() {
    let fx = Fixture::new(false);
    fx.synth("pcm", &["--pcm16", "--normalize-db", "-20"]);
    let w = read_wav(fx.p("pcm/a.wav")).unwrap();
    assert_eq!(std::fs::metadata(fx.p("pcm/a.wav")).unwrap().len(), 44 + 4800 * 2);
    let rms = (w.samples.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    assert!((20.0 * rms.log10() + 20.0).abs() < 0.5, "rms {rms}");
}

#[test]
fn stage_dumps_match_probe() {
    let fx = Fixture::new(false);
    fx.synth("dump", &["--dump-stages"]);
    let index: Value = serde_json::from_slice(&bytes(fx.p("dump/c.stages/index.json"))).unwrap();
    let g = Generator::new(fx.cfg.clone(), &read_weights(fx.p("w.sfgw")).unwrap()).unwrap();
    let seq = sifigan::features::load_feature_bundle(fx.p("c")).unwrap();
    let mut probe = Probe::capturing();
    g.synthesize_probed(&seq, 1.0, 0, &mut probe).unwrap();
    assert_eq!(index.as_object().unwrap().len(), probe.taps.len());
    for (name, map) in &probe.taps {
        let raw = bytes(fx.p(&format!("dump/c.stages/{name}.f32")));
        let vals: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, map.data(), "{name}");
        assert_eq!(index[name]["channels"], map.channels());
    }
}

#[test]
fn excite_zero_weights_is_silent() {
    let fx = Fixture::new(true);
    let (c, w, a, o) = (fx.p("config.json"), fx.p("w.sfgw"), fx.p("a"), fx.p("exc"));
    run(&["excite", "--config", &c, "--weights", &w, "--features", &a, "--out", &o]);
    let e = read_wav(fx.p("exc/a.excitation.wav")).unwrap();
    assert_eq!(e.len(), 40 * 120);
    assert!(e.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn excite_matches_synthesis_excitation() {
    let fx = Fixture::new(false);
    let (c, w, a, o) = (fx.p("config.json"), fx.p("w.sfgw"), fx.p("a"), fx.p("exc"));
    run(&["excite", "--config", &c, "--weights", &w, "--features", &a, "--out", &o, "--seed", "3"]);
    let g = Generator::new(fx.cfg.clone(), &read_weights(fx.p("w.sfgw")).unwrap()).unwrap();
    let seq = sifigan::features::load_feature_bundle(fx.p("a")).unwrap();
    let lib = g.synthesize(&seq, 1.0, 3).unwrap();
    assert_eq!(read_wav(fx.p("exc/a.excitation.wav")).unwrap().samples, lib.excitation.samples);
}

#[test]
fn eval_identical_and_parity() {
    let fx = Fixture::new(false);
    fx.synth("out", &[]);
    let (a, b) = (fx.p("out/a.wav"), fx.p("out/b.wav"));
    let same = json(&run(&["eval", "--reference", &a, "--generated", &a]));
    let m = &same["pairs"][0]["metrics"];
    for key in ["mel_l1", "reg_loss", "log_f0_rmse", "vuv_error"] {
        assert!(m.get(key).is_some(), "{key}");
    }
    assert_eq!(m["mel_l1"], 0.0);
    assert_eq!(m["reg_loss"], 0.0);
    assert_eq!(m["vuv_error"], 0.0);
    assert!(m["log_f0_rmse"].is_null() || m["log_f0_rmse"] == 0.0);

    // a reference made from a clean tone so pitch metrics are defined
    let tone: Vec<f32> = (0..4800).map(|t| (0.4 * (std::f64::consts::TAU * 180.0 * t as f64 / 24000.0).sin()) as f32).collect();
    let tone = sifigan::Waveform::new(tone, 24000);
    let tp = fx.dir.path().join("tone.wav");
    sifigan::audio::write_wav(&tone, &tp).unwrap();
    let tp = tp.to_string_lossy().into_owned();
    let report = json(&run(&["eval", "--reference", &tp, "--generated", &a, "--excitation", &b]));
    let gen = read_wav(&a).unwrap();
    let mut exc = read_wav(&b).unwrap();
    let got = &report["pairs"][0]["metrics"];
    let mut gen_cut = gen.clone();
    gen_cut.samples.truncate(3000);
    exc.samples.truncate(3000);
    let mut tone_cut = tone.clone();
    tone_cut.samples.truncate(3000);
    assert_eq!(got["mel_l1"].as_f64().unwrap(), mel_l1(&tone_cut, &gen_cut).unwrap());
    assert_eq!(got["reg_loss"].as_f64().unwrap(), reg_loss(&exc, &tone_cut).unwrap());

    let no_exc = json(&run(&["eval", "--reference", &tp, "--generated", &a]));
    let mut tone_cut = tone.clone();
    tone_cut.samples.truncate(gen.len());
    let residual = lpc_residual(&gen, &LpcConfig::default()).unwrap();
    assert_eq!(
        no_exc["pairs"][0]["metrics"]["reg_loss"].as_f64().unwrap(),
        reg_loss(&residual, &tone_cut).unwrap()
    );
}

#[test]
fn inspect_counts_params() {
    let fx = Fixture::new(false);
    let (w, c) = (fx.p("w.sfgw"), fx.p("config.json"));
    let report = json(&run(&["inspect", "--weights", &w, "--config", &c]));
    let store = read_weights(&w).unwrap();
    assert_eq!(report["params"], count_params(&store));
    assert_eq!(report["config"]["valid"], true);
    assert_eq!(report["reference_params"], 11.3e6);
}

#[test]
fn bench_reports_rtf() {
    let fx = Fixture::new(false);
    let (c, a) = (fx.p("config.json"), fx.p("a"));
    let report = json(&run(&["bench", "--config", &c, "--features", &a, "--threads", "1", "--warmup", "0"]));
    assert!(report["rtf"].as_f64().unwrap() > 0.0);
    assert_eq!(report["threads"], 1);
    assert_eq!(report["reference"]["rtf"], 0.74);
    assert!(report["host"]["logical_cpus"].as_u64().unwrap() >= 1);
    let synthetic = json(&run(&["bench", "--config", &c, "--seconds", "1", "--clip-seconds", "0.4"]));
    assert_eq!(synthetic["clips"], 3);
    assert!((synthetic["audio_secs"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn failed_utterance_sets_exit_status() {
    let fx = Fixture::new(false);
    let (c, w, a, o) = (fx.p("config.json"), fx.p("w.sfgw"), fx.p("a"), fx.p("out"));
    let missing = fx.p("missing");
    let out = bin()
        .args(["synth", "--config", &c, "--weights", &w, "--features", &a, &missing, "--out", &o])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing"), "{stderr}");
    assert!(PathBuf::from(fx.p("out/a.wav")).exists());
    assert_eq!(json(&out)["failed"], 1);
}

#[test]
fn bad_weights_fail_fast() {
    let fx = Fixture::new(false);
    let mut store = read_weights(fx.p("w.sfgw")).unwrap();
    store.remove("filter.output.weight");
    save_weights(&store, fx.dir.path().join("bad.sfgw")).unwrap();
    let (c, w, a, o) = (fx.p("config.json"), fx.p("bad.sfgw"), fx.p("a"), fx.p("out"));
    let out = bin().args(["synth", "--config", &c, "--weights", &w, "--features", &a, "--out", &o]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing tensor filter.output.weight"));
}

#[test]
fn default_config_round_trips() {
    let out = run(&["default-config"]);
    let cfg = ModelConfig::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ModelConfig::default());
}
