//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use spkprof::dataset::{parse_manifest, scan_timit_layout, write_manifest, Manifest, Split, SyntheticCorpus};
use spkprof::dsp::{read_cache, write_cache, FeatureCache};
use spkprof::experiment::{
    assign_splits, cached_features, examples_for, extract_features, find_preset, presets, run_experiment,
    run_on_features, CacheStatus, CheckpointMeta, ExperimentPreset, FeatureRequest, Protocol, RunOptions,
    SplitPolicy, REPORTED_NOTE,
};
use spkprof::models::{load_checkpoint, ModelKind, ModelSpec, Task};
use spkprof::training::{evaluate, model_label, History, MetricRow, TrainConfig, Trained};

use crate::options::{default_request, FeatureArgs, Overrides, TrainArgs};
use crate::{DataArgs, KindArg, PartitionArg, SplitArg, DATA_ROOT_ENV};

/// Missing or contradictory command-line input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

fn meta_path(root: &Path, meta: Option<PathBuf>) -> Result<PathBuf> {
    let meta = meta.unwrap_or_else(|| root.join("speaker_meta.csv"));
    if !meta.is_file() {
        return usage(format!(
            "speaker metadata {} not found; pass --meta with a speaker_id,age table",
            meta.display()
        ));
    }
    Ok(meta)
}

fn require_root(root: Option<PathBuf>) -> Result<PathBuf> {
    match root {
        Some(r) => Ok(r),
        None => usage(format!("no corpus given; pass --manifest, --root or set {DATA_ROOT_ENV}")),
    }
}

fn load_manifest(data: &DataArgs) -> Result<Manifest> {
    if let Some(path) = &data.manifest {
        return Ok(parse_manifest(path)?);
    }
    let root = require_root(data.root.clone())?;
    let meta = meta_path(&root, data.meta.clone())?;
    let scan = scan_timit_layout(&root, &meta)?;
    log::info!(
        "scanned {}: {} records, {} files skipped",
        root.display(),
        scan.manifest.len(),
        scan.report.skipped.len()
    );
    Ok(scan.manifest)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(root: Option<PathBuf>, meta: Option<PathBuf>, out: &Path, synthetic: Option<usize>, seed: Option<u64>) -> Result<()> {
    let root = require_root(root)?;
    let meta = match synthetic {
        Some(n) => {
            let mut gen = SyntheticCorpus {
                n_speakers: n,
                ..SyntheticCorpus::default()
            };
            if let Some(s) = seed {
                gen.seed = s;
            }
            let corpus = gen.generate(&root)?;
            println!(
                "generated {} speakers, {} files under {}",
                corpus.speakers.len(),
                corpus.files,
                corpus.root.display()
            );
            meta.unwrap_or(corpus.meta_path)
        }
        None => meta_path(&root, meta)?,
    };
    let scan = scan_timit_layout(&root, &meta)?;
    let missing = scan.report.missing_speakers();
    if !missing.is_empty() {
        log::warn!("{} speakers lack metadata and were skipped", missing.len());
    }
    ensure_parent(out)?;
    write_manifest(&scan.manifest, out)?;
    let m = &scan.manifest;
    println!(
        "wrote {} records ({} speakers; train {}, test {}) to {}; skipped {} of {} files",
        m.len(),
        m.speaker_count(),
        m.count_split(Split::Train),
        m.count_split(Split::Test),
        out.display(),
        scan.report.skipped.len(),
        scan.report.files_seen
    );
    Ok(())
}

fn status_word(s: CacheStatus) -> &'static str {
    match s {
        CacheStatus::Hit => "cache hit",
        CacheStatus::Written => "wrote",
        CacheStatus::Uncached => "extracted",
    }
}

pub fn features(data: &DataArgs, fa: FeatureArgs, out: &Path, no_cache: bool, config: Option<&Path>) -> Result<()> {
    let req = Overrides::resolve(&fa, None, config)?.feature_request(&default_request())?;
    let manifest = load_manifest(data)?;
    let (cache, status) = if no_cache {
        let cache = extract_features(&manifest, &req)?;
        ensure_parent(out)?;
        write_cache(out, &cache)?;
        (cache, CacheStatus::Written)
    } else {
        cached_features(&manifest, &req, Some(out))?
    };
    println!(
        "{}: {} ({} records, {} rows, {})",
        status_word(status),
        out.display(),
        cache.header.records,
        cache.header.rows,
        if cache.header.averaged { "frame-averaged" } else { "sequential" }
    );
    Ok(())
}

pub struct TrainRequest {
    pub data: DataArgs,
    pub cache: Option<PathBuf>,
    pub features: FeatureArgs,
    pub train: TrainArgs,
    pub model: KindArg,
    pub tasks: String,
    pub model_config: Option<PathBuf>,
    pub split: Option<SplitArg>,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

fn model_kind(k: KindArg) -> ModelKind {
    match k {
        KindArg::Mlp => ModelKind::Mlp,
        KindArg::Lstm => ModelKind::Lstm,
        KindArg::Cnn => ModelKind::Cnn,
        KindArg::MultitaskMlp => ModelKind::MultitaskMlp,
        KindArg::MultitaskCnnLstm => ModelKind::MultitaskCnnLstm,
    }
}

fn parse_tasks(s: &str) -> Result<Vec<Task>> {
    s.split(',')
        .map(|t| t.trim().parse::<Task>().map_err(anyhow::Error::from))
        .collect()
}

/// Picks the feature request for `train`: explicit flags or config keys win,
/// then the header of an existing cache, then the defaults.
fn train_request(overrides: &Overrides, cache: Option<&Path>) -> Result<FeatureRequest> {
    let base = match cache.filter(|p| p.is_file()) {
        Some(p) if !overrides.touches_features() => {
            let h = spkprof::dsp::read_cache_header(p)?;
            FeatureRequest::new(h.spec, h.config, h.averaged)
        }
        _ => default_request(),
    };
    Ok(overrides.feature_request(&base)?)
}

pub fn train(r: TrainRequest) -> Result<()> {
    let overrides = Overrides::resolve(&r.features, Some(&r.train), r.train.config.as_deref())?;
    let req = train_request(&overrides, r.cache.as_deref())?;
    let mut model = match &r.model_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ModelSpec>(&text)
                .map_err(|e| spkprof::Error::Config(format!("model config {}: {e}", path.display())))?
        }
        None => ModelSpec::new(model_kind(r.model), req.dim(), parse_tasks(&r.tasks)?),
    };
    let speaker_id = model.tasks.contains(&Task::Speaker);
    if speaker_id {
        model.n_speakers.get_or_insert(2);
    }
    let features = req.spec.to_string();
    let mut cfg = TrainConfig {
        features: features.clone(),
        ..TrainConfig::default()
    };
    overrides.apply_train(&mut cfg)?;
    let split_arg = r.split.unwrap_or(if speaker_id { SplitArg::Speaker } else { SplitArg::Corpus });
    let preset = ExperimentPreset {
        name: "train".into(),
        provenance: "command line".into(),
        features,
        averaged: req.averaged,
        protocol: Protocol::Single,
        oversample: !speaker_id,
        split: match split_arg {
            SplitArg::Corpus => SplitPolicy::default(),
            SplitArg::Speaker => SplitPolicy::SPEAKER_ID,
        },
        feature_config: req.config.clone(),
        model,
        train: cfg,
        reported: Vec::new(),
    };
    preset.validate()?;
    let manifest = load_manifest(&r.data)?;
    let (cache, status) = cached_features(&manifest, &req, r.cache.as_deref())?;
    log::info!("features: {}", status_word(status));
    let report = run_on_features(&preset, &manifest, &cache, status)?;
    let (_, bytes) = report
        .checkpoints()?
        .into_iter()
        .next()
        .context("training produced no checkpoint")?;
    write_file(&r.out, &bytes)?;
    if let Some(dir) = &r.report {
        report.write_bundle(dir)?;
    }
    print!("{}", report.summary_text());
    println!("checkpoint written to {}", r.out.display());
    Ok(())
}

fn check_cache(cache: &FeatureCache, req: &FeatureRequest) -> Result<()> {
    let h = &cache.header;
    if h.spec != req.spec || h.averaged != req.averaged || h.config != req.config {
        return Err(spkprof::Error::Shape(format!(
            "feature cache holds {} ({} rows, {}) but the checkpoint was trained on {} ({} rows, {})",
            h.kinds,
            h.rows,
            if h.averaged { "averaged" } else { "sequential" },
            req.spec,
            req.dim(),
            if req.averaged { "averaged" } else { "sequential" },
        ))
        .into());
    }
    Ok(())
}

pub fn eval(data: &DataArgs, checkpoint: &Path, cache: Option<&Path>, partition: PartitionArg, out: Option<&Path>) -> Result<()> {
    let (model, meta): (_, CheckpointMeta) = load_checkpoint(checkpoint)?;
    let req = FeatureRequest::new(meta.features.parse()?, meta.feature_config.clone(), meta.averaged);
    let manifest = load_manifest(data)?;
    let features = match cache {
        Some(p) => read_cache(p)?,
        None => extract_features(&manifest, &req)?,
    };
    check_cache(&features, &req)?;
    let split = match partition {
        PartitionArg::Train => Split::Train,
        PartitionArg::Val => Split::Val,
        PartitionArg::Test => Split::Test,
    };
    let assigned = assign_splits(&manifest, meta.split, meta.seed)?;
    let examples = examples_for(assigned.in_split(split), &assigned, &features)?;
    if examples.is_empty() {
        return Err(spkprof::Error::Config(format!("the {} partition is empty", split.as_str())).into());
    }
    let kind = model.spec().kind;
    let trained = Trained {
        model,
        standardizer: meta.standardizer,
        age_scaler: meta.age_scaler,
        history: History::default(),
    };
    let rows: Vec<MetricRow> = evaluate(&trained, &examples)?
        .into_iter()
        .map(|(task, metrics)| MetricRow {
            run: "eval".into(),
            arm: if kind.is_multitask() { "MTL" } else { "STL" }.into(),
            model: model_label(kind).into(),
            task,
            metrics,
        })
        .collect();
    println!("{} partition: {} utterances", split.as_str(), examples.len());
    print!("{}", MetricRow::render_text(&rows));
    if let Some(path) = out {
        write_file(path, MetricRow::render_csv(&rows).as_bytes())?;
    }
    Ok(())
}

pub struct ExperimentRequest {
    pub preset: Option<String>,
    pub preset_file: Option<PathBuf>,
    pub data: DataArgs,
    pub features: FeatureArgs,
    pub train: TrainArgs,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub no_cache: bool,
}

fn apply_overrides(preset: &mut ExperimentPreset, o: &Overrides) -> Result<()> {
    if o.touches_features() {
        let req = o.feature_request(&preset.feature_request()?)?;
        preset.features = req.spec.to_string();
        preset.train.features = preset.features.clone();
        preset.averaged = req.averaged;
        preset.model.input_dim = req.dim();
        preset.feature_config = req.config;
    }
    o.apply_train(&mut preset.train)?;
    preset.validate()?;
    Ok(())
}

pub fn experiment(r: ExperimentRequest) -> Result<()> {
    let mut preset = match (&r.preset, &r.preset_file) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentPreset::from_toml(&text)?
        }
        (Some(name), None) => find_preset(name)?,
        (None, None) => {
            return usage(format!(
                "name a preset or pass --preset-file; presets: {}",
                spkprof::experiment::preset_names().join(", ")
            ))
        }
    };
    let overrides = Overrides::resolve(&r.features, Some(&r.train), r.train.config.as_deref())?;
    apply_overrides(&mut preset, &overrides)?;
    let manifest = load_manifest(&r.data)?;
    let opts = RunOptions {
        cache_dir: (!r.no_cache).then(|| r.cache_dir.clone().unwrap_or_else(|| r.out.join("cache"))),
    };
    let report = run_experiment(&preset, &manifest, &opts)?;
    report.write_bundle(&r.out)?;
    log::info!("features: {}", status_word(report.cache_status));
    print!("{}", report.summary_text());
    println!("bundle written to {}", r.out.display());
    Ok(())
}

pub fn list_presets() {
    for p in presets() {
        println!("{}  ({})", p.name, p.provenance);
        println!(
            "  {:?} on {} ({}), tasks: {}",
            p.model.kind,
            p.features,
            if p.averaged { "frame-averaged" } else { "sequential" },
            p.model.tasks.iter().map(Task::to_string).collect::<Vec<_>>().join(",")
        );
        if !p.reported.is_empty() {
            let cells: Vec<String> = p
                .reported
                .iter()
                .map(|v| format!("{} {} {}={:.3}", v.arm, v.task, v.metric, v.value))
                .collect();
            println!("  reference: {}", cells.join("; "));
        }
    }
    println!("\nreference values are {REPORTED_NOTE}");
}
