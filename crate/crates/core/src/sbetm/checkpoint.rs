//! Binary checkpoint container: `SBETMCKP`, a little-endian `u64` header length,
//! a JSON header, then every tensor as row-major little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParams, TensorRole};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SBETMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    role: TensorRole,
    shape: Vec<usize>,
    /// Byte offset into the blob section.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    #[serde(default)]
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Tokens labelling the rows of `rho` and the encoder input columns.
    pub vocab: Vec<String>,
    pub meta: serde_json::Value,
}

pub fn encode_checkpoint(params: &ModelParams, vocab: &[String], meta: &serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    for t in params.tensors() {
        tensors.push(TensorEntry {
            name: t.name,
            role: t.role,
            shape: t.shape,
            offset: blob.len(),
        });
        for &x in t.data {
            blob.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let header = Header {
        version: FORMAT_VERSION,
        config: params.config.clone(),
        vocab: vocab.to_vec(),
        meta: meta.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Input(format!("checkpoint: {m}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let blob = &bytes[16 + hlen..];
    let mut params = ModelParams::zeros(header.config.clone())?;
    let mut slots = params.tensors_mut();
    if slots.len() != header.tensors.len() {
        return Err(bad("tensor count does not match the configuration"));
    }
    for (slot, entry) in slots.iter_mut().zip(&header.tensors) {
        if slot.name != entry.name || slot.shape != entry.shape {
            return Err(bad(&format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
        }
        let n = slot.data.len();
        let raw = blob
            .get(entry.offset..entry.offset + 4 * n)
            .ok_or_else(|| bad(&format!("tensor {} out of bounds", entry.name)))?;
        for (x, c) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
            *x = f32::from_le_bytes(c.try_into().unwrap()) as f64;
        }
    }
    drop(slots);
    Ok(Checkpoint {
        params,
        vocab: header.vocab,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, vocab: &[String], meta: &serde_json::Value) -> Result<()> {
    crate::io::write_atomic(path, &encode_checkpoint(params, vocab, meta)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
