//! Checkpoint container: a header line, a JSON manifest, then named
//! little-endian `f32` blobs.
//!
//! ```text
//! strokeseg-checkpoint 1 <manifest bytes>\n
//! <manifest JSON>
//! <blob 0><blob 1>...
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use strokeseg_tensor::Tensor;

use super::net::Model;
use super::spec::ModelSpec;
use crate::error::{Error, IoContext, Result};

const MAGIC: &str = "strokeseg-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the blob section.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub spec: ModelSpec,
    pub seed: u64,
    pub epoch: usize,
    pub step: u64,
    /// Trainer state: metric history, optimizer counters, schedules.
    pub state: serde_json::Value,
    pub blobs: Vec<BlobEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    /// Parameters under `param/<name>`, buffers under `buffer/<name>`.
    pub fn from_model(model: &Model<f32>) -> Self {
        let mut tensors: Vec<(String, Tensor<f32>)> =
            model.store.iter().map(|(_, n, t)| (format!("param/{n}"), t.clone())).collect();
        tensors.extend(model.store.buffers().map(|(_, n, t)| (format!("buffer/{n}"), t.clone())));
        Checkpoint {
            manifest: CheckpointManifest {
                spec: model.spec.clone(),
                seed: model.seed,
                epoch: 0,
                step: 0,
                state: serde_json::Value::Null,
                blobs: Vec::new(),
            },
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Rebuilds the model from the stored spec and overwrites every parameter
    /// and buffer with the stored values.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::build(self.manifest.spec.clone(), self.manifest.seed)?;
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let name = format!("param/{}", model.store.name(id));
            let t = self.tensor(&name).ok_or_else(|| Error::Invalid(format!("checkpoint lacks {name}")))?;
            model.store.set(id, t.clone())?;
        }
        let buffers: Vec<_> = model.store.buffers().map(|(id, n, _)| (id, format!("buffer/{n}"))).collect();
        for (id, name) in buffers {
            let t = self.tensor(&name).ok_or_else(|| Error::Invalid(format!("checkpoint lacks {name}")))?;
            if t.shape() != model.store.buffer(id).shape() {
                return Err(Error::Invalid(format!("checkpoint {name} has shape {:?}", t.shape())));
            }
            *model.store.buffer_mut(id) = t.clone();
        }
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut manifest = self.manifest.clone();
        manifest.blobs.clear();
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            manifest.blobs.push(BlobEntry { name: name.clone(), shape: t.shape().to_vec(), offset });
            offset += 4 * t.numel() as u64;
        }
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::format(path, e.to_string()))?;
        let mut out = Vec::with_capacity(json.len() + offset as usize + 64);
        writeln!(out, "{MAGIC} {VERSION} {}", json.len()).expect("write to memory");
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).at(dir)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &out).at(&tmp)?;
        fs::rename(&tmp, path).at(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).at(path)?;
        let mut r = BufReader::new(file);
        let mut header = String::new();
        r.read_line(&mut header).at(path)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != MAGIC {
            return Err(Error::format(path, "not a checkpoint file"));
        }
        if parts[1] != VERSION.to_string() {
            return Err(Error::format(path, format!("unsupported checkpoint version {}", parts[1])));
        }
        let len: usize = parts[2].parse().map_err(|_| Error::format(path, "bad manifest length"))?;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| Error::format(path, "truncated manifest"))?;
        let manifest: CheckpointManifest =
            serde_json::from_slice(&json).map_err(|e| Error::format(path, e.to_string()))?;
        let mut blob = Vec::new();
        r.read_to_end(&mut blob).at(path)?;
        let mut tensors = Vec::with_capacity(manifest.blobs.len());
        for entry in &manifest.blobs {
            let n: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let bytes = blob
                .get(start..start + 4 * n)
                .ok_or_else(|| Error::format(path, format!("blob {} truncated", entry.name)))?;
            let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
        }
        Ok(Checkpoint { manifest, tensors })
    }
}
