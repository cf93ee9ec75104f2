//! CPU inference engine for a source-filter HiFi-GAN vocoder.
//!
//! Given WORLD features (continuous F0, v/uv, mel-generalized cepstrum and
//! band aperiodicity at a 5 ms shift) the [`Generator`] synthesizes a 24 kHz
//! waveform. A sine excitation derived from F0 drives a source network built
//! from pitch-dependent dilated convolutions; its output conditions a
//! HiFi-GAN filter network. Scaling F0 before synthesis transposes the pitch.
//!
//! The [`analysis`] module carries the objective metrics (mel L1, LPC-residual
//! source distance, log-F0 RMSE, V/UV error) and the real-time-factor benchmark.

pub mod analysis;
pub mod audio;
pub mod checkpoint;
pub mod config;
mod error;
pub mod excitation;
pub mod features;
pub mod generator;
pub mod kernels;
mod tensor;
pub mod weights;

pub use config::{InjectionMode, ModelConfig};
pub use error::{Error, Result};
pub use excitation::{F0Track, Waveform};
pub use features::FeatureSeq;
pub use generator::{Generator, Probe, Synthesis};
pub use tensor::FeatureMap;
pub use weights::{count_params, WeightStore};
