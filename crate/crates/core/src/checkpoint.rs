//! JSON checkpoint: `{meta: {d, h, max_phrases, seed, format_version},
//! tensors: {name: {shape, data}}}`. Floats round-trip bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub d: usize,
    pub h: usize,
    pub max_phrases: usize,
    pub seed: u64,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, TensorData>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Self {
        let tensors = params
            .layout()
            .into_iter()
            .zip(params.tensors())
            .map(|(info, t)| {
                (
                    info.name.to_string(),
                    TensorData {
                        shape: info.shape,
                        data: t.to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            meta: CheckpointMeta {
                d: params.d,
                h: params.h,
                max_phrases: params.max_phrases,
                seed: params.seed,
                format_version: FORMAT_VERSION,
            },
            tensors,
        }
    }

    pub fn into_params(self) -> Result<ModelParams> {
        let meta = self.meta;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                meta.format_version
            )));
        }
        if meta.d == 0 || meta.h == 0 || meta.max_phrases == 0 {
            return Err(Error::Checkpoint("dimensions must be positive".into()));
        }
        let mut params = ModelParams::zeros(meta.d, meta.h, meta.max_phrases);
        params.seed = meta.seed;
        let layout = params.layout();
        if self.tensors.len() != layout.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for (info, dst) in layout.iter().zip(params.tensors_mut()) {
            let t = self
                .tensors
                .get(info.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", info.name)))?;
            if t.shape != info.shape || t.data.len() != dst.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?} and {} values, expected {:?}",
                    info.name,
                    t.shape,
                    t.data.len(),
                    info.shape
                )));
            }
            dst.copy_from_slice(&t.data);
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::Checkpoint(format!("tensor {name} has non-finite entries")));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let mut text = Checkpoint::from_params(params).to_json();
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_params()
}
