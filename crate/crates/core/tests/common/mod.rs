#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sifigan::ModelConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    if scale == 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Narrow ladders so whole-network tests stay fast.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        filter_channels: vec![64, 32, 16, 8, 4],
        source_channels: vec![32, 16, 8, 4, 2],
        ..ModelConfig::default()
    }
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}
