//! Channel-major feature maps.

use crate::{Error, Result};

/// A `[channels, len]` block of `f32` samples, one contiguous row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    len: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_vec(channels: usize, len: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::LengthMismatch {
                what: format!("feature map data ({channels}x{len})"),
                expected: channels * len,
                found: data.len(),
            });
        }
        Ok(Self {
            channels,
            len,
            data,
        })
    }

    /// Single-channel map over a signal.
    pub fn from_signal(samples: &[f32]) -> Self {
        Self {
            channels: 1,
            len: samples.len(),
            data: samples.to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, t: usize) -> f32 {
        self.data[c * self.len + t]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &FeatureMap) -> Result<()> {
        self.check_same_shape(other, "residual add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    /// Adds `other` into the leading `other.channels()` rows of `self`.
    pub fn add_leading_channels(&mut self, other: &FeatureMap) -> Result<()> {
        if other.len != self.len {
            return Err(Error::LengthMismatch {
                what: "injected feature map".into(),
                expected: self.len,
                found: other.len,
            });
        }
        if other.channels > self.channels {
            return Err(Error::Config(format!(
                "injection needs at most {} channels, source provides {}",
                self.channels, other.channels
            )));
        }
        let n = other.data.len();
        for (a, b) in self.data[..n].iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> FeatureMap {
        FeatureMap {
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same_shape(&self, other: &FeatureMap, what: &str) -> Result<()> {
        if self.channels != other.channels || self.len != other.len {
            return Err(Error::ShapeMismatch {
                name: what.into(),
                expected: vec![self.channels, self.len],
                found: vec![other.channels, other.len],
            });
        }
        Ok(())
    }
}
