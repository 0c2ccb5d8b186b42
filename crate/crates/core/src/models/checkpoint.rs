//! Model checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SPKCKPT1"
//! header_len   u32
//! header       JSON: spec_toml, spec_hash (sha256 hex of spec_toml),
//!              tensors [{name, shape}], meta (caller-defined JSON)
//! tensors      for each header entry in order: product(shape) f32 values
//! ```
//!
//! Tensors are the trainable parameters in registration order followed by the
//! batchnorm running means and variances.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::net::Model;
use super::spec::ModelSpec;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SPKCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec_toml: String,
    pub spec_hash: String,
    pub tensors: Vec<TensorEntry>,
    pub meta: serde_json::Value,
}

fn named_tensors(model: &Model) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out: Vec<_> = model
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data().to_vec()))
        .collect();
    for (i, n) in model.norms().iter().enumerate() {
        let f = n.running_mean.len();
        out.push((format!("norm.{i}.running_mean"), vec![f], n.running_mean.clone()));
        out.push((format!("norm.{i}.running_var"), vec![f], n.running_var.clone()));
    }
    out
}

pub fn checkpoint_bytes<M: Serialize>(model: &Model, meta: &M) -> Result<Vec<u8>> {
    let spec_toml = model.spec().to_toml();
    let tensors = named_tensors(model);
    let header = CheckpointHeader {
        spec_hash: hex::encode(Sha256::digest(spec_toml.as_bytes())),
        spec_toml,
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
        meta: serde_json::to_value(meta)
            .map_err(|e| Error::Validation(format!("checkpoint metadata: {e}")))?,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(16 + json.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, data) in &tensors {
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn save_checkpoint<M: Serialize>(path: impl AsRef<Path>, model: &Model, meta: &M) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(model, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    let bad = |reason: &str| Error::decode(path, reason.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| Error::decode(path, format!("header: {e}")))?;
    Ok((header, 12 + len))
}

pub fn read_checkpoint_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_header(path, &bytes)?.0)
}

/// Restores a model and its metadata. The embedded spec must hash to the
/// recorded value and every tensor must match the rebuilt architecture.
pub fn load_checkpoint<M: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Model, M)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, mut offset) = parse_header(path, &bytes)?;
    let actual = hex::encode(Sha256::digest(header.spec_toml.as_bytes()));
    if actual != header.spec_hash {
        return Err(Error::Validation(format!(
            "{}: model spec hash mismatch (recorded {}, computed {actual})",
            path.display(),
            header.spec_hash
        )));
    }
    let spec = ModelSpec::from_toml(&header.spec_toml)?;
    let mut model = Model::build(&spec, 0)?;
    let expected = named_tensors(&model);
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, s, _), e)| *n != e.name || *s != e.shape)
    {
        return Err(Error::Validation(format!(
            "{}: tensor layout does not match the embedded model spec",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(expected.len());
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| Error::decode(path, format!("truncated tensor {}", e.name)))?;
        values.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect::<Vec<f32>>(),
        );
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(Error::decode(path, "trailing bytes after tensors"));
    }
    let mut it = values.into_iter();
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let v = it.next().expect("counted");
        model.params_mut().get_mut(id).data_mut().copy_from_slice(&v);
    }
    for norm in model.norms_mut() {
        norm.running_mean = it.next().expect("counted");
        norm.running_var = it.next().expect("counted");
    }
    let meta = serde_json::from_value(header.meta)
        .map_err(|e| Error::decode(path, format!("checkpoint metadata: {e}")))?;
    Ok((model, meta))
}
