//! Named parameter tensors and the inventory a config requires.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{InjectionMode, ModelConfig};
use crate::{Error, Result};

/// Std of randomly initialized weights.
pub const INIT_STD: f32 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::LengthMismatch {
                what: format!("tensor data for shape {shape:?}"),
                expected: n,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Parameter tensors keyed by dotted canonical name, e.g. `source.up.0.weight`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Looks up a tensor and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.shape != shape {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        Ok(t)
    }

    /// Tensors in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Checks the store against the tensors `cfg` needs.
    ///
    /// Every required tensor must be present with its exact shape. Extra
    /// tensors are accepted only when they belong to the other injection mode.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let required = tensor_inventory(cfg, cfg.injection);
        for (name, shape) in &required {
            self.expect(name, shape)?;
        }
        let other = match cfg.injection {
            InjectionMode::Downsampled => InjectionMode::Direct,
            InjectionMode::Direct => InjectionMode::Downsampled,
        };
        let allowed = tensor_inventory(cfg, other);
        for (name, t) in &self.tensors {
            if required.contains_key(name) {
                continue;
            }
            match allowed.get(name) {
                Some(shape) if *shape == t.shape => {}
                Some(shape) => {
                    return Err(Error::ShapeMismatch {
                        name: name.clone(),
                        expected: shape.clone(),
                        found: t.shape.clone(),
                    })
                }
                None => return Err(Error::UnexpectedTensor(name.clone())),
            }
        }
        Ok(())
    }
}

/// Total number of scalar parameters.
pub fn count_params(store: &WeightStore) -> usize {
    store.iter().map(|(_, t)| t.numel()).sum()
}

fn push_layer(map: &mut BTreeMap<String, Vec<usize>>, prefix: &str, weight: [usize; 3], out: usize) {
    map.insert(format!("{prefix}.weight"), weight.to_vec());
    map.insert(format!("{prefix}.bias"), vec![out]);
}

/// Every tensor name and shape the generator needs for `cfg` under `mode`.
pub fn tensor_inventory(cfg: &ModelConfig, mode: InjectionMode) -> BTreeMap<String, Vec<usize>> {
    let mut m = BTreeMap::new();
    let s = &cfg.source_channels;
    let f = &cfg.filter_channels;
    let n = cfg.num_stages();

    push_layer(&mut m, "source.input", [s[0], cfg.in_channels, cfg.input_kernel_size], s[0]);
    for (i, &r) in cfg.upsample_rates.iter().enumerate() {
        push_layer(&mut m, &format!("source.up.{i}"), [s[i], s[i + 1], 2 * r], s[i + 1]);
        let k = 2 * cfg.remaining_factor(i) + 1;
        push_layer(&mut m, &format!("source.sine_emb.{i}"), [s[i + 1], 1, k], s[i + 1]);
        for j in 0..cfg.qp_dilations[i].len() {
            let c = s[i + 1];
            push_layer(&mut m, &format!("source.qp.{i}.{j}.pd"), [c, c, cfg.qp_kernel_size], c);
            push_layer(&mut m, &format!("source.qp.{i}.{j}.conv"), [c, c, cfg.qp_kernel_size], c);
        }
    }
    push_layer(&mut m, "source.head", [1, s[n], cfg.output_kernel_size], 1);

    push_layer(&mut m, "filter.input", [f[0], cfg.in_channels, cfg.input_kernel_size], f[0]);
    for (i, &r) in cfg.upsample_rates.iter().enumerate() {
        let c = f[i + 1];
        push_layer(&mut m, &format!("filter.up.{i}"), [f[i], c, 2 * r], c);
        if mode == InjectionMode::Downsampled {
            let k = 2 * cfg.remaining_factor(i) + 1;
            push_layer(&mut m, &format!("filter.inject.{i}"), [c, s[n], k], c);
        }
        for (b, (&k, dils)) in cfg.mrf_kernel_sizes.iter().zip(&cfg.mrf_dilations).enumerate() {
            for j in 0..dils.len() {
                push_layer(&mut m, &format!("filter.mrf.{i}.{b}.{j}"), [c, c, k], c);
            }
        }
    }
    push_layer(&mut m, "filter.output", [1, f[n], cfg.output_kernel_size], 1);
    m
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a; stable across platforms and releases
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

/// Seeded `N(0, 0.01)` weights and zero biases for every tensor of `cfg`.
///
/// Each tensor draws from its own generator seeded by `(seed, name)`, so the
/// values do not depend on creation order. Injection tensors for both modes
/// are included, so one store drives either wiring.
pub fn init_random_weights(cfg: &ModelConfig, seed: u64) -> WeightStore {
    let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
    let mut store = WeightStore::new();
    let mut inventory = tensor_inventory(cfg, InjectionMode::Downsampled);
    inventory.extend(tensor_inventory(cfg, InjectionMode::Direct));
    for (name, shape) in inventory {
        let n: usize = shape.iter().product();
        let data = if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, &name));
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        store.insert(name, Tensor { shape, data });
    }
    store
}

/// All-zero parameters for every tensor of `cfg`.
pub fn zero_weights(cfg: &ModelConfig) -> WeightStore {
    let mut store = WeightStore::new();
    let mut inventory = tensor_inventory(cfg, InjectionMode::Downsampled);
    inventory.extend(tensor_inventory(cfg, InjectionMode::Direct));
    for (name, shape) in inventory {
        store.insert(name, Tensor::zeros(shape));
    }
    store
}
