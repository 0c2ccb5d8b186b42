use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_audio, Manifest};
use crate::dsp::{
    cache_key, read_cache, read_cache_header, write_cache, CacheHeader, CachedRecord, FeatureCache,
    FeatureConfig, FeatureSpec, SetExtractor,
};
use crate::Result;

/// What to extract for every utterance of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRequest {
    pub spec: FeatureSpec,
    pub config: FeatureConfig,
    /// Frame-averaged vectors instead of sequences.
    pub averaged: bool,
}

impl FeatureRequest {
    pub fn new(spec: FeatureSpec, config: FeatureConfig, averaged: bool) -> Self {
        Self {
            spec,
            config,
            averaged,
        }
    }

    /// Feature rows per frame.
    pub fn dim(&self) -> usize {
        self.spec.dim(&self.config)
    }

    /// Cache key over the manifest's paths and this request.
    pub fn key(&self, manifest: &Manifest) -> String {
        let paths: Vec<String> = record_paths(manifest);
        cache_key(paths.iter().map(String::as_str), &self.spec, &self.config, self.averaged)
    }
}

fn record_paths(manifest: &Manifest) -> Vec<String> {
    manifest
        .records()
        .iter()
        .map(|r| r.path.display().to_string())
        .collect()
}

/// Whether features came from an existing cache file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Written,
    Uncached,
}

/// Decodes and featurizes every manifest record in parallel. Records keep
/// manifest order.
pub fn extract_features(manifest: &Manifest, req: &FeatureRequest) -> Result<FeatureCache> {
    let extractor = SetExtractor::new(&req.spec, &req.config)?;
    let records = manifest
        .records()
        .par_iter()
        .map(|r| {
            let clip = read_audio(&r.path)?;
            let features = extractor.extract(&clip, req.averaged)?;
            Ok(CachedRecord::from_features(r.path.display().to_string(), &features))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureCache {
        header: CacheHeader {
            key: req.key(manifest),
            kinds: req.spec.to_string(),
            spec: req.spec.clone(),
            config: req.config.clone(),
            averaged: req.averaged,
            rows: extractor.dim(),
            records: records.len(),
        },
        records,
    })
}

/// Returns the cached features at `cache_path` when its key matches the
/// request, otherwise extracts and (when a path is given) writes them.
pub fn cached_features(
    manifest: &Manifest,
    req: &FeatureRequest,
    cache_path: Option<&Path>,
) -> Result<(FeatureCache, CacheStatus)> {
    let Some(path) = cache_path else {
        return Ok((extract_features(manifest, req)?, CacheStatus::Uncached));
    };
    if path.is_file() {
        match read_cache_header(path) {
            Ok(h) if h.key == req.key(manifest) => {
                log::info!("feature cache hit: {}", path.display());
                return Ok((read_cache(path)?, CacheStatus::Hit));
            }
            Ok(_) => log::info!("feature cache {} is stale; recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable feature cache {}: {e}", path.display()),
        }
    }
    let cache = extract_features(manifest, req)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    }
    write_cache(path, &cache)?;
    Ok((cache, CacheStatus::Written))
}
