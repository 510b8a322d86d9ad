//! Binary attention-tensor files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `ATNG`                   |
//! | 4      | 4    | format version (u32, = 1)      |
//! | 8      | 4    | layer count (u32)              |
//! | 12     | 4    | heads per layer (u32)          |
//! | 16     | 4    | sequence length m (u32)        |
//! | 20     | ...  | f32 payload, `[layer][head][i][j]` |
//!
//! Weights are held as `f64` in memory and written as `f32`, so a tensor that
//! was read from a file writes back to the identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::AttentionTensor;
use crate::filtration::AttentionMap;

pub const MAGIC: [u8; 4] = *b"ATNG";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Row-sum tolerance applied when reading serialized maps.
pub const IO_ROW_SUM_TOLERANCE: f64 = 1e-4;

pub fn encode_tensor(t: &AttentionTensor) -> Vec<u8> {
    let m = t.seq_len();
    let mut out = Vec::with_capacity(HEADER_LEN + t.maps().len() * m * m * 4);
    out.extend_from_slice(&MAGIC);
    for v in [FORMAT_VERSION, t.layers() as u32, t.heads() as u32, m as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for map in t.maps() {
        for &w in map.weights() {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes and validates a tensor. `path` is only used in error messages.
pub fn decode_tensor(bytes: &[u8], sample_id: &str, path: &Path) -> Result<AttentionTensor> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("header truncated: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let version = word(1);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let (layers, heads, m) = (word(2) as usize, word(3) as usize, word(4) as usize);
    if layers == 0 || heads == 0 || m == 0 {
        return Err(Error::format(
            path,
            format!("zero dimension in header ({layers} layers, {heads} heads, seq_len {m})"),
        ));
    }
    let expected = layers
        .checked_mul(heads)
        .and_then(|v| v.checked_mul(m))
        .and_then(|v| v.checked_mul(m))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingData {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }

    let per_map = m * m * 4;
    let mut maps = Vec::with_capacity(layers * heads);
    for (idx, chunk) in payload.chunks_exact(per_map).enumerate() {
        let (layer, head) = (idx / heads, idx % heads);
        let weights: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let map = AttentionMap::unchecked(m, weights)
            .map_err(|e| Error::format(path, format!("layer {layer} head {head}: {e}")))?;
        if let Some((row, sum)) = map.first_bad_row(IO_ROW_SUM_TOLERANCE) {
            return Err(Error::RowSum {
                path: path.to_path_buf(),
                layer,
                head,
                row,
                sum,
                tolerance: IO_ROW_SUM_TOLERANCE,
            });
        }
        maps.push(map);
    }
    AttentionTensor::new(sample_id, layers, heads, maps)
}

/// Reads a tensor file; the sample id is the file stem.
pub fn load_tensor(path: &Path) -> Result<AttentionTensor> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_tensor_as(path, &id)
}

pub fn load_tensor_as(path: &Path, sample_id: &str) -> Result<AttentionTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, sample_id, path)
}

pub fn write_tensor(path: &Path, t: &AttentionTensor) -> Result<()> {
    std::fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}
