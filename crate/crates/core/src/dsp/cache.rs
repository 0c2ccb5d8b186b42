//! On-disk feature cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "SPKFEAT1"
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (CacheHeader: key, kinds, config, averaged, rows, records)
//! records      repeated `records` times:
//!   path_len   u32
//!   path       path_len bytes UTF-8
//!   rows       u32
//!   cols       u32       (1 for frame-averaged features, frames otherwise)
//!   values     rows*cols f32, row-major
//! ```

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::FeatureConfig;
use super::features::{FeatureSpec, Features};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SPKFEAT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub key: String,
    pub kinds: String,
    pub spec: FeatureSpec,
    pub config: FeatureConfig,
    pub averaged: bool,
    pub rows: usize,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedRecord {
    pub path: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl CachedRecord {
    pub fn from_features(path: impl Into<String>, features: &Features) -> Self {
        Self {
            path: path.into(),
            rows: features.rows(),
            cols: features.frames(),
            values: features.values().iter().map(|&v| v as f32).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub header: CacheHeader,
    pub records: Vec<CachedRecord>,
}

impl FeatureCache {
    pub fn get(&self, path: &str) -> Option<&CachedRecord> {
        self.records.iter().find(|r| r.path == path)
    }
}

/// Content key over the inputs that determine a cache's bytes.
pub fn cache_key<'a>(
    paths: impl IntoIterator<Item = &'a str>,
    spec: &FeatureSpec,
    cfg: &FeatureConfig,
    averaged: bool,
) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("serializable"));
    h.update(serde_json::to_vec(cfg).expect("serializable"));
    h.update([u8::from(averaged)]);
    for p in paths {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn write_cache(path: impl AsRef<Path>, cache: &FeatureCache) -> Result<()> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&cache.header).expect("serializable header");
    let payload: usize = cache.records.iter().map(|r| 12 + r.path.len() + 4 * r.values.len()).sum();
    let mut bytes = Vec::with_capacity(12 + header.len() + payload);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header);
    for r in &cache.records {
        if r.values.len() != r.rows * r.cols {
            return Err(Error::Shape(format!(
                "cache record {} has {} values for {}x{}",
                r.path,
                r.values.len(),
                r.rows,
                r.cols
            )));
        }
        bytes.extend_from_slice(&(r.path.len() as u32).to_le_bytes());
        bytes.extend_from_slice(r.path.as_bytes());
        bytes.extend_from_slice(&(r.rows as u32).to_le_bytes());
        bytes.extend_from_slice(&(r.cols as u32).to_le_bytes());
        for v in &r.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::io(
                self.path,
                io::Error::new(io::ErrorKind::UnexpectedEof, "truncated feature cache"),
            ));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

fn parse_header(path: &Path, cur: &mut Cursor<'_>) -> Result<CacheHeader> {
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::decode(path, "not a feature cache (bad magic)"));
    }
    let len = cur.u32()?;
    serde_json::from_slice(cur.take(len)?)
        .map_err(|e| Error::decode(path, format!("feature cache header: {e}")))
}

/// Reads only the header; used for cache-hit checks.
pub fn read_cache_header(path: impl AsRef<Path>) -> Result<CacheHeader> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut prefix = [0u8; 12];
    file.read_exact(&mut prefix).map_err(|e| Error::io(path, e))?;
    let len = u32::from_le_bytes([prefix[8], prefix[9], prefix[10], prefix[11]]) as usize;
    let mut bytes = prefix.to_vec();
    bytes.resize(12 + len, 0);
    file.read_exact(&mut bytes[12..]).map_err(|e| Error::io(path, e))?;
    parse_header(path, &mut Cursor { path, bytes: &bytes, pos: 0 })
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<FeatureCache> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { path, bytes: &bytes, pos: 0 };
    let header = parse_header(path, &mut cur)?;
    let mut records = Vec::with_capacity(header.records);
    for _ in 0..header.records {
        let len = cur.u32()?;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| Error::decode(path, "non-UTF-8 path in feature cache"))?;
        let rows = cur.u32()?;
        let cols = cur.u32()?;
        if rows != header.rows {
            return Err(Error::Shape(format!(
                "cache record {name} has {rows} rows, header says {}",
                header.rows
            )));
        }
        let raw = cur.take(rows * cols * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(CachedRecord {
            path: name,
            rows,
            cols,
            values,
        });
    }
    Ok(FeatureCache { header, records })
}
