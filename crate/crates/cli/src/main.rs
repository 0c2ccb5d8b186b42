//! `spkprof` command-line front end: corpus ingestion, feature extraction,
//! training, evaluation and named experiment presets.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or shape
//! error, 4 numeric failure (non-finite loss).

mod commands;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use spkprof::experiment::presets;

use options::{FeatureArgs, TrainArgs};

/// Environment variable naming the default corpus root.
pub const DATA_ROOT_ENV: &str = "SPKPROF_DATA_ROOT";

#[derive(Parser, Debug)]
#[command(name = "spkprof", version, about = "Speaker profiling toolkit: features, STL/MTL training and preset experiments")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Maximum worker threads for extraction and comparison runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Where utterances come from: an existing manifest or a corpus root.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Manifest CSV written by `ingest`.
    #[arg(long, conflicts_with = "root")]
    pub manifest: Option<PathBuf>,
    /// TIMIT-layout corpus root (scanned on the fly).
    #[arg(long, env = DATA_ROOT_ENV)]
    pub root: Option<PathBuf>,
    /// Speaker metadata table (`speaker_id,age`); defaults to `<root>/speaker_meta.csv`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Mlp,
    Lstm,
    Cnn,
    MultitaskMlp,
    MultitaskCnnLstm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    /// Corpus train/test with held-out validation speakers.
    Corpus,
    /// 70/10/20 per speaker (speaker identification).
    Speaker,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Train,
    Val,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan a TIMIT-layout corpus (or generate a synthetic one) into a manifest.
    Ingest {
        /// Corpus root; with --synthetic, where the corpus is generated.
        #[arg(long, env = DATA_ROOT_ENV)]
        root: Option<PathBuf>,
        /// Speaker metadata table; defaults to `<root>/speaker_meta.csv`.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Output manifest CSV.
        #[arg(long)]
        out: PathBuf,
        /// Generate a synthetic corpus with this many speakers first.
        #[arg(long, value_name = "N")]
        synthetic: Option<usize>,
        /// Seed for the synthetic generator.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract features for every manifest record into a cache file.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        features: FeatureArgs,
        /// Output feature cache.
        #[arg(long)]
        out: PathBuf,
        /// Recompute even when the cache is up to date.
        #[arg(long)]
        no_cache: bool,
        /// TOML file whose keys override the flags.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model and write its checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Feature cache to train on; created from the feature flags when missing.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Network family.
        #[arg(long, value_enum, default_value_t = KindArg::Mlp)]
        model: KindArg,
        /// Comma-separated tasks: accent, gender, age, speaker.
        #[arg(long, default_value = "gender")]
        tasks: String,
        /// Full model spec as TOML (overrides --model and --tasks).
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Split policy; defaults to per-speaker for speaker identification.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Also write a report bundle to this directory.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a checkpoint on one partition of a manifest.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature cache; extracted with the checkpoint's settings when omitted.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
        partition: PartitionArg,
        /// Write the metrics table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset (or a preset TOML file) and write a report bundle.
    Experiment {
        /// Preset name; see `spkprof presets`.
        preset: Option<String>,
        /// Full experiment definition, e.g. a bundle's config.toml.
        #[arg(long, conflicts_with = "preset")]
        preset_file: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Output bundle directory.
        #[arg(long)]
        out: PathBuf,
        /// Feature cache directory (default `<out>/cache`).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Always recompute features.
        #[arg(long)]
        no_cache: bool,
    },
    /// List the built-in presets with their table provenance.
    Presets,
}

fn preset_help() -> String {
    let mut s = String::from("Presets (one per results-table row):\n");
    for p in presets() {
        s.push_str(&format!("  {:<32} {}\n", p.name, p.provenance));
    }
    s.push_str(&format!(
        "\nEnvironment:\n  {DATA_ROOT_ENV}  default corpus root for --root\n\nExit codes: 0 ok, 2 usage/config, 3 data/shape, 4 non-finite loss"
    ));
    s
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<spkprof::Error>() {
            return match e {
                spkprof::Error::Config(_) => 2,
                spkprof::Error::NonFinite { .. } => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(preset_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Ingest { root, meta, out, synthetic, seed } => commands::ingest(root, meta, &out, synthetic, seed),
        Command::Features { data, features, out, no_cache, config } => {
            commands::features(&data, features, &out, no_cache, config.as_deref())
        }
        Command::Train { data, cache, features, train, model, tasks, model_config, split, out, report } => {
            commands::train(commands::TrainRequest {
                data,
                cache,
                features,
                train,
                model,
                tasks,
                model_config,
                split,
                out,
                report,
            })
        }
        Command::Eval { data, checkpoint, cache, partition, out } => {
            commands::eval(&data, &checkpoint, cache.as_deref(), partition, out.as_deref())
        }
        Command::Experiment { preset, preset_file, data, features, train, out, cache_dir, no_cache } => {
            commands::experiment(commands::ExperimentRequest {
                preset,
                preset_file,
                data,
                features,
                train,
                out,
                cache_dir,
                no_cache,
            })
        }
        Command::Presets => {
            commands::list_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
