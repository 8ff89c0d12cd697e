//! Checkpoint persistence: a JSON manifest next to a raw little-endian
//! 32-bit float payload. Round-trips are bitwise exact.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerParams, ParamSet, Parameters};
use crate::tensor::Tensor;

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload file.
    pub offset: u64,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub spec_hash: String,
    pub seed: u64,
    pub epochs: usize,
    /// Payload file name, resolved relative to the manifest's directory.
    pub payload: String,
    pub tensors: Vec<TensorEntry>,
}

fn payload_path(manifest_path: &Path, payload: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(payload)
}

/// Writes `<path>` (manifest JSON) plus the adjacent payload file.
pub fn save_checkpoint(
    path: &Path,
    spec_hash: &str,
    seed: u64,
    epochs: usize,
    params: &Parameters<f32>,
) -> Result<CheckpointManifest> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    let payload_name = format!("{stem}.bin");

    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (layer, lp) in params.iter() {
        for (role, tensor) in [("weight", &lp.weight), ("bias", &lp.bias)] {
            tensors.push(TensorEntry {
                name: format!("layer{layer}.{role}"),
                shape: tensor.shape().to_vec(),
                offset: payload.len() as u64,
                len: tensor.len(),
            });
            for v in tensor.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA,
        spec_hash: spec_hash.to_string(),
        seed,
        epochs,
        payload: payload_name.clone(),
        tensors,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config {
        message: format!("manifest serialization failed: {e}"),
    })?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    let bin_path = payload_path(path, &payload_name);
    std::fs::write(&bin_path, &payload).map_err(|e| Error::io(&bin_path, e))?;
    Ok(manifest)
}

fn parse_tensor_name(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix("layer")?;
    let (index, role) = rest.split_once('.')?;
    Some((index.parse().ok()?, role))
}

/// Loads a manifest and payload back into `Parameters<f32>`. The caller
/// checks `spec_hash` against its own config.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointManifest, Parameters<f32>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Config {
        message: format!("{}: {e}", path.display()),
    })?;
    if manifest.schema_version != CHECKPOINT_SCHEMA {
        return Err(Error::config(format!(
            "unsupported checkpoint schema {}",
            manifest.schema_version
        )));
    }
    let bin_path = payload_path(path, &manifest.payload);
    let payload = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;

    let mut params: Parameters<f32> = ParamSet::new();
    let mut pending: std::collections::BTreeMap<usize, (Option<Tensor<f32>>, Option<Tensor<f32>>)> =
        std::collections::BTreeMap::new();
    for entry in &manifest.tensors {
        let (layer, role) = parse_tensor_name(&entry.name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("unrecognised tensor name '{}'", entry.name),
        })?;
        let start = entry.offset as usize;
        let end = start + entry.len * 4;
        if payload.len() < end {
            return Err(Error::Format {
                path: bin_path.clone(),
                offset: payload.len() as u64,
                message: format!("payload truncated: tensor '{}' needs {end} bytes", entry.name),
            });
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data)?;
        let slot = pending.entry(layer).or_insert((None, None));
        match role {
            "weight" => slot.0 = Some(tensor),
            "bias" => slot.1 = Some(tensor),
            other => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    message: format!("unknown tensor role '{other}'"),
                })
            }
        }
    }
    for (layer, (weight, bias)) in pending {
        match (weight, bias) {
            (Some(weight), Some(bias)) => params.insert(layer, LayerParams { weight, bias }),
            _ => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    message: format!("layer {layer} is missing its weight or bias tensor"),
                })
            }
        }
    }
    Ok((manifest, params))
}
