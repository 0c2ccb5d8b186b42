//! End-to-end experiment plumbing: cached feature extraction over a
//! manifest, split policies, named presets and report bundles.

mod assemble;
mod features;
mod presets;
mod runner;

pub use assemble::{assemble, assign_splits, examples_for, targets_for, SplitPolicy};
pub use features::{cached_features, extract_features, CacheStatus, FeatureRequest};
pub use presets::{find_preset, preset_names, presets, ExperimentPreset, Protocol, ReportedValue, REPORTED_NOTE};
pub use runner::{run_experiment, run_on_features, CheckpointMeta, ExperimentReport, RunOptions};
