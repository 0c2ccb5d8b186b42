use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::assemble::{assemble, assign_splits, SplitPolicy};
use super::features::{cached_features, CacheStatus};
use super::presets::{ExperimentPreset, Protocol, REPORTED_NOTE};
use crate::dataset::Manifest;
use crate::dsp::{FeatureCache, FeatureConfig};
use crate::models::{checkpoint_bytes, Task};
use crate::training::{
    run_comparison, stl_specs_for, AgeScaler, ComparisonReport, RunResult, Standardizer, Trained,
};
use crate::{Error, Result};

/// Everything besides weights needed to score new data with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub features: String,
    pub averaged: bool,
    pub feature_config: FeatureConfig,
    /// Split policy and seed the model was trained under, so evaluation can
    /// rebuild the same held-out partitions.
    pub split: SplitPolicy,
    pub seed: u64,
    pub standardizer: Option<Standardizer>,
    pub age_scaler: AgeScaler,
}

impl CheckpointMeta {
    pub fn for_preset(preset: &ExperimentPreset, trained: &Trained) -> Self {
        Self {
            features: preset.features.clone(),
            averaged: preset.averaged,
            feature_config: preset.feature_config.clone(),
            split: preset.split,
            seed: preset.train.seed,
            standardizer: trained.standardizer.clone(),
            age_scaler: trained.age_scaler,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for feature caches; `None` always recomputes.
    pub cache_dir: Option<PathBuf>,
}

/// Results of one preset run, ready to be written as a bundle.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub preset: ExperimentPreset,
    pub report: ComparisonReport,
    pub cache_status: CacheStatus,
}

impl ExperimentReport {
    /// Header, metric table and the preset's reference values.
    pub fn summary_text(&self) -> String {
        let p = &self.preset;
        let mut out = String::new();
        let _ = writeln!(out, "preset: {}", p.name);
        let _ = writeln!(out, "source: {}", p.provenance);
        let _ = writeln!(
            out,
            "features: {} ({})",
            p.features,
            if p.averaged { "frame-averaged" } else { "sequential" }
        );
        let _ = writeln!(
            out,
            "metrics: test split; precision, recall and F1 are macro averages; age errors in years"
        );
        out.push('\n');
        out.push_str(&self.report.summary_text());
        if !p.reported.is_empty() {
            let _ = writeln!(out, "\nreference values ({REPORTED_NOTE}):");
            for r in &p.reported {
                let _ = writeln!(out, "  {} {} {} {:.3}", r.arm, r.task, r.metric, r.value);
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        self.report.summary_csv()
    }

    pub fn history_jsonl(&self) -> String {
        self.report.history_jsonl()
    }

    /// Serialized checkpoint for every run, keyed by run id.
    pub fn checkpoints(&self) -> Result<Vec<(String, Vec<u8>)>> {
        self.report
            .runs
            .iter()
            .map(|r| {
                let meta = CheckpointMeta::for_preset(&self.preset, &r.trained);
                Ok((r.run_id.clone(), checkpoint_bytes(&r.trained.model, &meta)?))
            })
            .collect()
    }

    /// Writes `config.toml`, `summary.txt`, `summary.csv`, `history.jsonl`
    /// and `checkpoints/<run>.ckpt` under `dir`.
    pub fn write_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let ckpt_dir = dir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        write("config.toml", self.preset.to_toml().as_bytes())?;
        write("summary.txt", self.summary_text().as_bytes())?;
        write("summary.csv", self.summary_csv().as_bytes())?;
        write("history.jsonl", self.history_jsonl().as_bytes())?;
        for (run, bytes) in self.checkpoints()? {
            let path = ckpt_dir.join(format!("{run}.ckpt"));
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn metric(&self, run_id: &str, task: Task) -> Option<&crate::training::TaskMetrics> {
        self.report.run(run_id)?.metric(task)
    }
}

/// Runs a preset end to end on `manifest`: features (cached), splits,
/// optional oversampling of the training split, then training and test
/// evaluation.
pub fn run_experiment(preset: &ExperimentPreset, manifest: &Manifest, opts: &RunOptions) -> Result<ExperimentReport> {
    preset.validate()?;
    let req = preset.feature_request()?;
    let cache_path = opts
        .cache_dir
        .as_ref()
        .map(|d| d.join(format!("{}.spkfeat", &req.key(manifest)[..16])));
    let (cache, cache_status) = cached_features(manifest, &req, cache_path.as_deref())?;
    run_on_features(preset, manifest, &cache, cache_status)
}

/// Like [`run_experiment`] but with features already extracted. The cache
/// must have been built for the preset's feature request.
pub fn run_on_features(
    preset: &ExperimentPreset,
    manifest: &Manifest,
    cache: &FeatureCache,
    cache_status: CacheStatus,
) -> Result<ExperimentReport> {
    preset.validate()?;
    let req = preset.feature_request()?;
    let h = &cache.header;
    if h.spec != req.spec || h.averaged != req.averaged || h.config != req.config {
        return Err(Error::Shape(format!(
            "feature cache holds {} ({}, {} rows) but the experiment needs {} ({}, {} rows)",
            h.kinds,
            if h.averaged { "averaged" } else { "sequential" },
            h.rows,
            req.spec,
            if req.averaged { "averaged" } else { "sequential" },
            req.dim()
        )));
    }
    let seed = preset.train.seed;
    let assigned = assign_splits(manifest, preset.split, seed)?;
    let data = assemble(&assigned, cache, preset.oversample, seed)?;
    let mut model = preset.model.clone();
    if model.tasks.contains(&Task::Speaker) {
        model.n_speakers = Some(data.n_speakers);
    }
    let arm = if model.kind.is_multitask() { "MTL" } else { "STL" };
    let report = match preset.protocol {
        Protocol::Comparison => run_comparison(&stl_specs_for(&model)?, &model, &preset.train, &data)?,
        Protocol::Single => ComparisonReport {
            config: preset.train.clone(),
            runs: vec![RunResult::execute(&arm.to_ascii_lowercase(), arm, &model, &preset.train, &data)?],
        },
    };
    Ok(ExperimentReport {
        preset: preset.clone(),
        report,
        cache_status,
    })
}
