//! Generator topology and its JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::io_err;
use crate::excitation::SineParams;
use crate::{Error, Result};

/// How source-network features reach the filter network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionMode {
    /// The final source representation is brought to each stage's resolution
    /// by a strided convolution.
    Downsampled,
    /// Each stage receives the matching source stage output as-is.
    Direct,
}

impl std::str::FromStr for InjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "downsampled" => Ok(Self::Downsampled),
            "direct" => Ok(Self::Direct),
            other => Err(Error::InvalidArgument(format!("unknown injection mode {other:?}"))),
        }
    }
}

/// Per-dimension affine normalization applied to the conditioning features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub hop_size: usize,
    pub frame_shift_ms: f64,
    /// Conditioning dimensions (mgc + bap).
    pub in_channels: usize,
    pub upsample_rates: Vec<usize>,
    /// Input-conv width followed by the width after each upsampling stage.
    pub filter_channels: Vec<usize>,
    pub source_channels: Vec<usize>,
    pub input_kernel_size: usize,
    pub output_kernel_size: usize,
    /// Base dilations of the QP-ResBlock repetitions, one list per stage.
    pub qp_dilations: Vec<Vec<usize>>,
    pub dense_factors: Vec<f64>,
    pub qp_kernel_size: usize,
    pub mrf_kernel_sizes: Vec<usize>,
    /// Dilations per MRF branch, one list per kernel size.
    pub mrf_dilations: Vec<Vec<usize>>,
    pub injection: InjectionMode,
    pub leaky_slope: f32,
    pub sine: SineParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_stats: Option<FeatureStats>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24000,
            hop_size: 120,
            frame_shift_ms: 5.0,
            in_channels: 43,
            upsample_rates: vec![5, 4, 3, 2],
            filter_channels: vec![512, 256, 128, 64, 32],
            source_channels: vec![256, 128, 64, 32, 16],
            input_kernel_size: 7,
            output_kernel_size: 7,
            qp_dilations: vec![vec![1], vec![1, 2], vec![1, 2, 4], vec![1, 2, 4, 8]],
            dense_factors: vec![0.5, 1.0, 4.0, 8.0],
            qp_kernel_size: 3,
            mrf_kernel_sizes: vec![3, 5, 7],
            mrf_dilations: vec![vec![1, 3, 5], vec![1, 3, 5], vec![1, 3, 5]],
            injection: InjectionMode::Downsampled,
            leaky_slope: 0.1,
            sine: SineParams::default(),
            feature_stats: None,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn num_stages(&self) -> usize {
        self.upsample_rates.len()
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.sample_rate) / self.hop_size as f64
    }

    /// Product of the upsampling rates after stage `i`.
    pub fn remaining_factor(&self, stage: usize) -> usize {
        self.upsample_rates[stage + 1..].iter().product()
    }

    /// Samples per frame at the output of stage `i`.
    pub fn stage_hop(&self, stage: usize) -> usize {
        self.upsample_rates[..=stage].iter().product()
    }

    /// Sampling rate of the feature maps produced by stage `i`.
    pub fn stage_rate(&self, stage: usize) -> f64 {
        f64::from(self.sample_rate) / self.remaining_factor(stage) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let n = self.upsample_rates.len();
        if n == 0 {
            return bad("upsample_rates must not be empty".into());
        }
        if self.upsample_rates.contains(&0) {
            return bad("upsample rates must be positive".into());
        }
        let product: usize = self.upsample_rates.iter().product();
        if product != self.hop_size {
            return bad(format!(
                "product of upsample_rates {:?} is {product}, hop_size is {}",
                self.upsample_rates, self.hop_size
            ));
        }
        let expected_hop = f64::from(self.sample_rate) * self.frame_shift_ms / 1000.0;
        if (expected_hop - self.hop_size as f64).abs() > 1e-9 {
            return bad(format!(
                "hop_size {} does not match {} ms at {} Hz",
                self.hop_size, self.frame_shift_ms, self.sample_rate
            ));
        }
        for (name, ladder) in [("filter_channels", &self.filter_channels), ("source_channels", &self.source_channels)] {
            if ladder.len() != n + 1 {
                return bad(format!("{name} needs {} entries, has {}", n + 1, ladder.len()));
            }
            if ladder.contains(&0) {
                return bad(format!("{name} entries must be positive"));
            }
            if ladder.windows(2).any(|w| w[1] * 2 != w[0]) {
                return bad(format!("{name} {ladder:?} must halve at every stage"));
            }
        }
        if self.qp_dilations.len() != n || self.dense_factors.len() != n {
            return bad(format!(
                "qp_dilations and dense_factors need one entry per stage ({n})"
            ));
        }
        if self.qp_dilations.iter().any(|d| d.is_empty() || d.contains(&0)) {
            return bad("every QP-ResBlock needs at least one positive dilation".into());
        }
        if self.dense_factors.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return bad("dense factors must be positive".into());
        }
        for (name, k) in [
            ("input_kernel_size", self.input_kernel_size),
            ("output_kernel_size", self.output_kernel_size),
            ("qp_kernel_size", self.qp_kernel_size),
        ] {
            if k % 2 == 0 {
                return bad(format!("{name} must be odd, got {k}"));
            }
        }
        if self.mrf_kernel_sizes.is_empty() || self.mrf_kernel_sizes.len() != self.mrf_dilations.len() {
            return bad("mrf_kernel_sizes and mrf_dilations must be non-empty and equally long".into());
        }
        if self.mrf_kernel_sizes.iter().any(|k| k % 2 == 0) {
            return bad("MRF kernel sizes must be odd".into());
        }
        if self.mrf_dilations.iter().any(|d| d.is_empty() || d.contains(&0)) {
            return bad("every MRF branch needs at least one positive dilation".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        if self.injection == InjectionMode::Direct {
            for i in 0..n {
                if self.source_channels[i + 1] > self.filter_channels[i + 1] {
                    return bad(format!(
                        "direct injection at stage {i}: {} source channels exceed {} filter channels",
                        self.source_channels[i + 1],
                        self.filter_channels[i + 1]
                    ));
                }
            }
        }
        if let Some(stats) = &self.feature_stats {
            if stats.mean.len() != self.in_channels || stats.scale.len() != self.in_channels {
                return bad(format!("feature_stats must have {} entries", self.in_channels));
            }
            if stats.scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
                return bad("feature_stats scale entries must be finite and non-zero".into());
            }
        }
        Ok(())
    }
}

/// Reads and validates a JSON config. Unknown fields are rejected.
pub fn load_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    ModelConfig::from_json(&text)
}

pub fn save_config(cfg: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cfg.to_json() + "\n").map_err(io_err(path))
}
