//! `.sfgw` single-file weight container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes            | content                                         |
//! |------------------|-------------------------------------------------|
//! | 0..4             | magic `SFGW`                                    |
//! | 4..8             | format version, `u32`                           |
//! | 8..16            | manifest length `M`, `u64`                      |
//! | 16..16+M         | manifest JSON                                   |
//! | ..P              | zero padding up to `P`, the next multiple of 64 |
//! | P..              | tensor payloads, `f32` LE, each 64-byte aligned |
//!
//! The manifest is `{"tensors": {name: {"dtype": "f32le", "offset": o, "shape": [...]}}}`
//! with names in byte order and `o` relative to `P`. Writers emit tensors in
//! name order with minimal padding, so saving is deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::io_err;
use crate::weights::{Tensor, WeightStore};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFGW";
pub const FORMAT_VERSION: u32 = 1;
pub const ALIGN: usize = 64;
const HEADER_LEN: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    tensors: BTreeMap<String, Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    dtype: String,
    offset: u64,
    shape: Vec<usize>,
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

/// Serializes a store to the `.sfgw` byte layout.
pub fn encode_weights(store: &WeightStore) -> Vec<u8> {
    let mut tensors = BTreeMap::new();
    let mut offset = 0usize;
    for (name, t) in store.iter() {
        tensors.insert(
            name.to_string(),
            Entry {
                dtype: "f32le".into(),
                offset: offset as u64,
                shape: t.shape.clone(),
            },
        );
        offset = align_up(offset + t.numel() * 4);
    }
    let manifest = serde_json::to_vec(&Manifest { tensors }).expect("manifest serializes");
    let payload_start = align_up(HEADER_LEN + manifest.len());

    let mut out = Vec::with_capacity(payload_start + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.resize(payload_start, 0);
    for (_, t) in store.iter() {
        out.resize(align_up(out.len()), 0);
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses `.sfgw` bytes without checking them against a config.
pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore> {
    let bad = |msg: String| Error::Checkpoint(msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let manifest_end = (HEADER_LEN as u64)
        .checked_add(manifest_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| bad(format!("manifest length {manifest_len} exceeds file size {}", bytes.len())))?
        as usize;
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
        .map_err(|e| bad(format!("manifest: {e}")))?;
    let payload_start = align_up(manifest_end) as u64;
    let file_len = bytes.len() as u64;

    let mut spans = Vec::with_capacity(manifest.tensors.len());
    for (name, e) in &manifest.tensors {
        if e.dtype != "f32le" {
            return Err(bad(format!("tensor {name}: unsupported dtype {:?}", e.dtype)));
        }
        if e.offset % ALIGN as u64 != 0 {
            return Err(bad(format!("tensor {name}: offset {} is not {ALIGN}-byte aligned", e.offset)));
        }
        let numel = e
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| bad(format!("tensor {name}: shape {:?} overflows", e.shape)))?;
        let start = payload_start
            .checked_add(e.offset)
            .ok_or_else(|| bad(format!("tensor {name}: offset overflows")))?;
        let end = numel
            .checked_mul(4)
            .and_then(|n| start.checked_add(n))
            .ok_or_else(|| bad(format!("tensor {name}: size overflows")))?;
        if end > file_len {
            return Err(Error::TruncatedPayload {
                name: name.clone(),
                start,
                end,
                file_len,
            });
        }
        spans.push((start, end, name));
    }
    spans.sort();
    for w in spans.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(bad(format!("tensors {} and {} overlap", w[0].2, w[1].2)));
        }
    }

    let mut store = WeightStore::new();
    for (name, e) in manifest.tensors {
        let start = (payload_start + e.offset) as usize;
        let numel: usize = e.shape.iter().product();
        let data = bytes[start..start + numel * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(name, Tensor { shape: e.shape, data });
    }
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(store)).map_err(io_err(path))
}

/// Reads a checkpoint without config validation.
pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_weights(&bytes)
}

/// Reads a checkpoint and checks it carries exactly what `cfg` needs.
pub fn load_weights(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<WeightStore> {
    let store = read_weights(path)?;
    store.validate(cfg)?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_store() -> WeightStore {
        let mut s = WeightStore::new();
        s.insert("b.weight", Tensor::new(vec![2, 1, 3], vec![1.0, -2.0, 3.5, 0.0, -0.0, 1e-30]).unwrap());
        s.insert("a.bias", Tensor::new(vec![1], vec![f32::MIN_POSITIVE]).unwrap());
        s
    }

    #[test]
    fn header_layout() {
        let bytes = encode_weights(&small_store());
        assert_eq!(&bytes[..4], b"SFGW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let m = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let manifest: serde_json::Value = serde_json::from_slice(&bytes[16..16 + m]).unwrap();
        assert_eq!(manifest["tensors"]["a.bias"]["offset"], 0);
        assert_eq!(manifest["tensors"]["b.weight"]["offset"], 64);
        assert_eq!(bytes.len(), align_up(16 + m) + 64 + 24);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = small_store();
        let bytes = encode_weights(&s);
        let back = decode_weights(&bytes).unwrap();
        assert_eq!(encode_weights(&back), bytes);
        for (name, t) in s.iter() {
            let u = back.get(name).unwrap();
            let a: Vec<u32> = t.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = u.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_payload_is_named() {
        let bytes = encode_weights(&small_store());
        let err = decode_weights(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { ref name, .. } if name == "b.weight"), "{err}");
    }

    #[test]
    fn every_prefix_fails_cleanly() {
        let bytes = encode_weights(&small_store());
        for n in 0..bytes.len() {
            assert!(decode_weights(&bytes[..n]).is_err(), "prefix {n} decoded");
        }
    }

    #[test]
    fn huge_declared_shape_does_not_allocate() {
        let mut bytes = Vec::new();
        let manifest = br#"{"tensors":{"x":{"dtype":"f32le","offset":0,"shape":[4294967296,4294967296]}}}"#;
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        bytes.extend_from_slice(manifest);
        assert!(decode_weights(&bytes).is_err());
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_weights(&small_store());
        bytes[4] = 9;
        assert!(matches!(decode_weights(&bytes), Err(Error::Checkpoint(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_weights(&bytes), Err(Error::Checkpoint(_))));
    }
}
