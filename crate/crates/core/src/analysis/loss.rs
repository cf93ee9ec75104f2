//! Mel-domain distances.

use serde::{Deserialize, Serialize};

use super::lpc::{lpc_residual, LpcConfig};
use super::spectral::{log_mel, MelConfig, MelFilterbank};
use crate::excitation::Waveform;
use crate::{Error, Result};

/// Weights of the mel reconstruction and source regularization terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mel: f64,
    pub reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mel: 45.0, reg: 1.0 }
    }
}

/// Reusable mel analysis state.
#[derive(Debug, Clone)]
pub struct MelAnalyzer {
    pub cfg: MelConfig,
    pub fb: MelFilterbank,
}

impl MelAnalyzer {
    pub fn new(cfg: MelConfig) -> Self {
        Self {
            fb: MelFilterbank::new(&cfg),
            cfg,
        }
    }

    /// Mean absolute log-mel difference over frames and bins.
    pub fn l1(&self, a: &Waveform, b: &Waveform) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                what: "waveform samples".into(),
                expected: a.len(),
                found: b.len(),
            });
        }
        let ma = log_mel(a, &self.cfg, &self.fb)?;
        let mb = log_mel(b, &self.cfg, &self.fb)?;
        let sum: f64 = ma
            .values
            .iter()
            .zip(&mb.values)
            .map(|(x, y)| f64::from((x - y).abs()))
            .sum();
        Ok(sum / ma.values.len() as f64)
    }
}

impl Default for MelAnalyzer {
    fn default() -> Self {
        Self::new(MelConfig::default())
    }
}

pub fn mel_l1(a: &Waveform, b: &Waveform) -> Result<f64> {
    MelAnalyzer::default().l1(a, b)
}

/// Mel L1 between the LPC residual of `reference` and `excitation`.
pub fn reg_loss(excitation: &Waveform, reference: &Waveform) -> Result<f64> {
    reg_loss_with(excitation, reference, &MelAnalyzer::default(), &LpcConfig::default())
}

pub fn reg_loss_with(
    excitation: &Waveform,
    reference: &Waveform,
    mel: &MelAnalyzer,
    lpc: &LpcConfig,
) -> Result<f64> {
    let residual = lpc_residual(reference, lpc)?;
    mel.l1(&residual, excitation)
}
