//! WORLD feature bundles: continuous F0, v/uv flags, mgc and bap streams.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::FeatureStats;
use crate::error::io_err;
use crate::excitation::F0Track;
use crate::{Error, FeatureMap, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Frame-rate conditioning streams for one utterance.
///
/// Multi-dimensional streams are frame-major: `mgc[frame * mgc_dims + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    pub cf0: Vec<f32>,
    pub vuv: Vec<f32>,
    pub mgc: Vec<f32>,
    pub mgc_dims: usize,
    pub bap: Vec<f32>,
    pub bap_dims: usize,
    pub frame_shift_ms: f64,
}

impl FeatureSeq {
    pub fn frames(&self) -> usize {
        self.cf0.len()
    }

    pub fn frame_rate(&self) -> f64 {
        1000.0 / self.frame_shift_ms
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 * self.frame_shift_ms / 1000.0
    }

    pub fn validate(&self) -> Result<()> {
        let frames = self.frames();
        let check_len = |name: &str, len: usize, dims: usize| {
            if len != frames * dims {
                Err(Error::Stream {
                    stream: name.into(),
                    reason: format!("{} frames, expected {frames}", len / dims.max(1)),
                })
            } else {
                Ok(())
            }
        };
        check_len("vuv", self.vuv.len(), 1)?;
        check_len("mgc", self.mgc.len(), self.mgc_dims)?;
        check_len("bap", self.bap.len(), self.bap_dims)?;
        for (name, data) in [("cf0", &self.cf0), ("vuv", &self.vuv), ("mgc", &self.mgc), ("bap", &self.bap)] {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("stream {name} at element {i}")));
            }
        }
        if let Some(i) = self.cf0.iter().position(|&v| v <= 0.0) {
            return Err(Error::Stream {
                stream: "cf0".into(),
                reason: format!("continuous F0 must be positive, frame {i} is {}", self.cf0[i]),
            });
        }
        if let Some(i) = self.vuv.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Stream {
                stream: "vuv".into(),
                reason: format!("flags must be 0 or 1, frame {i} is {}", self.vuv[i]),
            });
        }
        if !(self.frame_shift_ms > 0.0) {
            return Err(Error::InvalidArgument("frame shift must be positive".into()));
        }
        Ok(())
    }

    /// Continuous F0 at frame rate, with the v/uv stream as voicing mask.
    pub fn f0_track(&self) -> F0Track {
        F0Track::new(self.cf0.clone(), self.frame_rate())
            .with_voicing(self.vuv.iter().map(|&v| v > 0.5).collect())
    }

    /// `[mgc_dims + bap_dims, frames]` conditioning map, optionally normalized.
    pub fn conditioning(&self, stats: Option<&FeatureStats>) -> Result<FeatureMap> {
        let frames = self.frames();
        let dims = self.mgc_dims + self.bap_dims;
        if let Some(s) = stats {
            if s.mean.len() != dims {
                return Err(Error::LengthMismatch {
                    what: "feature statistics".into(),
                    expected: dims,
                    found: s.mean.len(),
                });
            }
        }
        let mut map = FeatureMap::zeros(dims, frames);
        for t in 0..frames {
            let mgc = &self.mgc[t * self.mgc_dims..(t + 1) * self.mgc_dims];
            let bap = &self.bap[t * self.bap_dims..(t + 1) * self.bap_dims];
            for (d, &v) in mgc.iter().chain(bap).enumerate() {
                let v = match stats {
                    Some(s) => (v - s.mean[d]) / s.scale[d],
                    None => v,
                };
                map.data_mut()[d * frames + t] = v;
            }
        }
        Ok(map)
    }
}

/// Scales the continuous F0 stream, leaving every other stream untouched.
pub fn transform_f0(seq: &FeatureSeq, scale: f32) -> Result<FeatureSeq> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("F0 scale must be positive, got {scale}")));
    }
    let mut out = seq.clone();
    if scale != 1.0 {
        out.cf0.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

/// Deterministic stand-in features: a 150 Hz contour with 5.5 Hz vibrato,
/// unvoiced lead-in and tail, Gaussian spectral streams.
pub fn synthetic_features(frames: usize, mgc_dims: usize, bap_dims: usize, seed: u64) -> FeatureSeq {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 0.5).expect("valid std");
    let edge = frames / 10;
    let cf0 = (0..frames)
        .map(|t| {
            let secs = t as f32 * 0.005;
            150.0 + 30.0 * (std::f32::consts::TAU * 5.5 * secs).sin()
        })
        .collect();
    let vuv = (0..frames)
        .map(|t| if t < edge || t + edge >= frames { 0.0 } else { 1.0 })
        .collect();
    let mgc = (0..frames * mgc_dims).map(|_| normal.sample(&mut rng)).collect();
    let bap = (0..frames * bap_dims).map(|_| normal.sample(&mut rng)).collect();
    FeatureSeq {
        cf0,
        vuv,
        mgc,
        mgc_dims,
        bap,
        bap_dims,
        frame_shift_ms: 5.0,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamEntry {
    pub name: String,
    pub dims: usize,
    pub frames: usize,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl StreamEntry {
    pub fn file_name(&self) -> String {
        self.file.clone().unwrap_or_else(|| format!("{}.f32", self.name))
    }
}

/// `manifest.json` of a feature bundle directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub frame_shift_ms: f64,
    pub streams: Vec<StreamEntry>,
}

fn read_stream(dir: &Path, entry: &StreamEntry) -> Result<Vec<f32>> {
    if entry.dtype != "f32le" {
        return Err(Error::Stream {
            stream: entry.name.clone(),
            reason: format!("unsupported dtype {:?}", entry.dtype),
        });
    }
    let path = dir.join(entry.file_name());
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    let expected = entry.frames * entry.dims * 4;
    if bytes.len() != expected {
        return Err(Error::Stream {
            stream: entry.name.clone(),
            reason: format!(
                "file has {} bytes, manifest declares {} frames x {} dims = {expected}",
                bytes.len(),
                entry.frames,
                entry.dims
            ),
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("stream {} at element {i}", entry.name)));
    }
    Ok(data)
}

/// Loads `dir/manifest.json` and its `cf0`, `vuv`, `mgc` and `bap` streams.
pub fn load_feature_bundle(dir: impl AsRef<Path>) -> Result<FeatureSeq> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    let find = |name: &str| {
        manifest
            .streams
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::MissingStream(name.to_string()))
    };
    let (cf0_e, vuv_e, mgc_e, bap_e) = (find("cf0")?, find("vuv")?, find("mgc")?, find("bap")?);
    for e in [cf0_e, vuv_e] {
        if e.dims != 1 {
            return Err(Error::Stream {
                stream: e.name.clone(),
                reason: format!("expected 1 dimension, manifest declares {}", e.dims),
            });
        }
    }
    let frames = cf0_e.frames;
    for e in [vuv_e, mgc_e, bap_e] {
        if e.frames != frames {
            return Err(Error::Stream {
                stream: e.name.clone(),
                reason: format!("{} frames, cf0 has {frames}", e.frames),
            });
        }
    }
    let seq = FeatureSeq {
        cf0: read_stream(dir, cf0_e)?,
        vuv: read_stream(dir, vuv_e)?,
        mgc: read_stream(dir, mgc_e)?,
        mgc_dims: mgc_e.dims,
        bap: read_stream(dir, bap_e)?,
        bap_dims: bap_e.dims,
        frame_shift_ms: manifest.frame_shift_ms,
    };
    seq.validate()?;
    Ok(seq)
}

/// Writes a bundle directory (created if needed).
pub fn save_feature_bundle(seq: &FeatureSeq, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let frames = seq.frames();
    let streams: [(&str, &[f32], usize); 4] = [
        ("cf0", &seq.cf0, 1),
        ("vuv", &seq.vuv, 1),
        ("mgc", &seq.mgc, seq.mgc_dims),
        ("bap", &seq.bap, seq.bap_dims),
    ];
    let mut entries = Vec::new();
    for (name, data, dims) in streams {
        let entry = StreamEntry {
            name: name.into(),
            dims,
            frames,
            dtype: "f32le".into(),
            file: None,
        };
        let path = dir.join(entry.file_name());
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        entries.push(entry);
    }
    let manifest = BundleManifest {
        frame_shift_ms: seq.frame_shift_ms,
        streams: entries,
    };
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&mpath))
}
