//! Single-file checkpoint format.
//!
//! Layout: 8-byte magic `SMCKPT01`, little-endian u32 manifest length, a
//! JSON manifest (format version, model config, parameter entries in
//! serialization order), then the raw f64 little-endian data blob.
//! Serialization order is the parameter set's insertion order, so identical
//! models always produce identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::net::Model;
use super::ModelConfig;

const MAGIC: &[u8; 8] = b"SMCKPT01";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset into the data blob.
    offset: u64,
    /// Number of f64 values.
    len: u64,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut blob = Vec::new();
    for (name, tensor) in model.params.iter() {
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            dtype: "f64".to_string(),
            offset: blob.len() as u64,
            len: tensor.numel() as u64,
        });
        for v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        params: entries,
    };
    let manifest_bytes =
        serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + manifest_bytes.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    out.extend_from_slice(&blob);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a spikemar checkpoint",
            path.display()
        )));
    }
    let mlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 12 + mlen {
        return Err(Error::Checkpoint("truncated manifest".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..12 + mlen])
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let blob = &bytes[12 + mlen..];
    let mut model = Model::zeroed(manifest.config)?;
    if manifest.params.len() != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint lists {} parameters, model layout has {}",
            manifest.params.len(),
            model.params.len()
        )));
    }
    for entry in &manifest.params {
        if entry.dtype != "f64" {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let id = model.params.id_of(&entry.name).ok_or_else(|| {
            Error::Checkpoint(format!("unknown parameter {} in checkpoint", entry.name))
        })?;
        let expected = model.params.get(id).shape().to_vec();
        if expected != entry.shape {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?} in file, layout wants {:?}",
                entry.name, entry.shape, expected
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.len as usize * 8;
        if entry.len as usize != expected.iter().product::<usize>() || end > blob.len() {
            return Err(Error::Checkpoint(format!("{}: bad data extent", entry.name)));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *model.params.get_mut(id) = Tensor::new(expected, data)?;
    }
    Ok(model)
}
