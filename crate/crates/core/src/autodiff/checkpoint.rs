//! Flat little-endian f32 blob plus a JSON manifest describing each tensor.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT: &str = "labelgan-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 4],
    pub byte_offset: u64,
    pub byte_length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub epoch: u32,
    pub iteration: u64,
    pub rng_seed: u64,
    /// Free-form metadata (network layout, training settings).
    pub meta: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: u32,
    pub iteration: u64,
    pub rng_seed: u64,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn encode(&self) -> (Vec<u8>, Manifest) {
        let mut blob = Vec::new();
        let mut params = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let offset = blob.len() as u64;
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            params.push(ParamEntry {
                name: name.clone(),
                shape: t.shape(),
                byte_offset: offset,
                byte_length: blob.len() as u64 - offset,
            });
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            epoch: self.epoch,
            iteration: self.iteration,
            rng_seed: self.rng_seed,
            meta: self.meta.clone(),
            params,
        };
        (blob, manifest)
    }

    /// Writes `<stem>.bin` and `<stem>.json`, each via a temp file + rename.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let (blob, manifest) = self.encode();
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::json(stem, e))?;
        write_atomic(&stem.with_extension("bin"), &blob)?;
        write_atomic(&stem.with_extension("json"), &json)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let json_path = stem.with_extension("json");
        let bin_path = stem.with_extension("bin");
        let raw = fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| Error::json(&json_path, e))?;
        if manifest.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: unknown format {:?}",
                json_path.display(),
                manifest.format
            )));
        }
        let blob = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let mut tensors = Vec::with_capacity(manifest.params.len());
        for p in &manifest.params {
            let (start, len) = (p.byte_offset as usize, p.byte_length as usize);
            let numel: usize = p.shape.iter().product();
            if len != numel * 4 || start + len > blob.len() {
                return Err(Error::Checkpoint(format!(
                    "{}: entry {} has inconsistent extent",
                    bin_path.display(),
                    p.name
                )));
            }
            let data = blob[start..start + len]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push((p.name.clone(), Tensor::new(p.shape, data)?));
        }
        Ok(Self {
            epoch: manifest.epoch,
            iteration: manifest.iteration,
            rng_seed: manifest.rng_seed,
            meta: manifest.meta,
            tensors,
        })
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
