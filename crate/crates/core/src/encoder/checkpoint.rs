//! On-disk checkpoints: a directory holding `manifest.json` and
//! `params.bin` (little-endian binary64 values in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{param_layout, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: EncoderConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
}

pub fn save_checkpoint(model: &EncoderModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut offset = 0;
    let mut tensors = Vec::new();
    let mut bytes = Vec::with_capacity(model.num_params() * 8);
    for (spec, t) in model.layout().into_iter().zip(model.params()) {
        tensors.push(TensorEntry {
            name: spec.name,
            shape: spec.shape,
            byte_offset: offset,
        });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len() * 8;
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: model.config().clone(),
        tensors,
    };
    let manifest_path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&manifest_path, e))?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    let params_path = dir.join(PARAMS);
    fs::write(&params_path, bytes).map_err(|e| Error::io(&params_path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<EncoderModel> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Input(format!(
            "{}: unsupported checkpoint format version {}",
            manifest_path.display(),
            manifest.format_version
        )));
    }
    let params_path = dir.join(PARAMS);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;

    let layout = param_layout(&manifest.config);
    if layout.len() != manifest.tensors.len() {
        return Err(Error::Input(format!(
            "{}: expected {} tensors for this config, found {}",
            manifest_path.display(),
            layout.len(),
            manifest.tensors.len()
        )));
    }
    let mut params = Vec::with_capacity(layout.len());
    for (spec, entry) in layout.iter().zip(&manifest.tensors) {
        if spec.name != entry.name || spec.shape != entry.shape {
            return Err(Error::Input(format!(
                "{}: tensor {} {:?} does not match expected {} {:?}",
                manifest_path.display(),
                entry.name,
                entry.shape,
                spec.name,
                spec.shape
            )));
        }
        let n: usize = entry.shape.iter().product();
        let end = entry.byte_offset + n * 8;
        let raw = bytes.get(entry.byte_offset..end).ok_or_else(|| {
            Error::Input(format!("{}: truncated at tensor {}", params_path.display(), entry.name))
        })?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.push(Tensor::new(entry.shape.clone(), data)?);
    }
    EncoderModel::from_params(manifest.config, params)
}
