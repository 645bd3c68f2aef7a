//! Checkpoint serialization: a JSON manifest (config, seed, tensor
//! name/shape/offset table) next to a raw little-endian binary of `f64`s
//! concatenated in manifest order. Round-trips are byte-exact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor2D;

use super::{ModelConfig, ModelError, ModelParams};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    seed: u64,
    weights_file: String,
    tensors: Vec<TensorEntry>,
}

fn weights_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `<path>` (JSON manifest) and `<path with .bin>` (weights).
pub fn save_checkpoint(params: &ModelParams, seed: u64, path: &Path) -> Result<(), ModelError> {
    let bin_path = weights_path(path);
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (name, tensor) in params.tensors() {
        let (rows, cols) = tensor.shape();
        entries.push(TensorEntry {
            name,
            rows,
            cols,
            offset,
            len: tensor.len(),
        });
        for &v in tensor.as_slice() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += tensor.len();
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: params.config.clone(),
        seed,
        weights_file: bin_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| io_err(path, e))?;
    std::fs::write(&bin_path, blob).map_err(|e| io_err(&bin_path, e))?;
    Ok(())
}

/// Loads a checkpoint pair written by [`save_checkpoint`]. Returns the
/// parameters and the recorded seed.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64), ModelError> {
    let json = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let bin_path = weights_path(path);
    let blob = std::fs::read(&bin_path).map_err(|e| io_err(&bin_path, e))?;

    let mut params = ModelParams::zeros(&manifest.config);
    let mut loaded = 0usize;
    {
        let mut slots = params.tensors_mut();
        if slots.len() != manifest.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "manifest lists {} tensors, model has {}",
                manifest.tensors.len(),
                slots.len()
            )));
        }
        for (entry, (name, tensor)) in manifest.tensors.iter().zip(slots.iter_mut()) {
            if entry.name != *name {
                return Err(ModelError::Checkpoint(format!(
                    "tensor order mismatch: manifest `{}`, model `{}`",
                    entry.name, name
                )));
            }
            if (entry.rows, entry.cols) != tensor.shape() || entry.len != tensor.len() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{}` shape mismatch",
                    entry.name
                )));
            }
            let start = entry.offset * 8;
            let end = start + entry.len * 8;
            if end > blob.len() {
                return Err(ModelError::Checkpoint(format!(
                    "weights file truncated at tensor `{}`",
                    entry.name
                )));
            }
            let values: Vec<f64> = blob[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            **tensor = Tensor2D::from_vec(entry.rows, entry.cols, values);
            loaded += entry.len;
        }
    }
    if loaded * 8 != blob.len() {
        return Err(ModelError::Checkpoint(format!(
            "weights file has {} bytes, manifest covers {}",
            blob.len(),
            loaded * 8
        )));
    }
    Ok((params, manifest.seed))
}
