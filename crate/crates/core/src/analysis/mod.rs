//! Objective metrics and benchmarking.

pub mod bench;
pub mod loss;
pub mod lpc;
pub mod pitch;
pub mod spectral;

pub use bench::{rtf, rtf_benchmark, BenchReport, HostInfo};
pub use loss::{mel_l1, reg_loss, reg_loss_with, LossWeights, MelAnalyzer};
pub use lpc::{autocorrelation, levinson_durbin, lpc_residual, LpcConfig, LpcSolution};
pub use pitch::{estimate_f0, estimate_f0_with, log_f0_rmse, vuv_error, F0EstimatorConfig};
pub use spectral::{log_mel, mel_project, stft, MelConfig, MelFilterbank, MelSpectrogram, Spectrogram, WindowKind};
