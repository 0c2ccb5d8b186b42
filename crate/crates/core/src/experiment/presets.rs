use serde::{Deserialize, Serialize};

use super::assemble::SplitPolicy;
use super::features::FeatureRequest;
use crate::dsp::{FeatureConfig, FeatureSpec};
use crate::models::{LossWeights, ModelKind, ModelSpec, Task};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Label attached to every reference value a preset carries.
pub const REPORTED_NOTE: &str = "reported in paper, requires licensed TIMIT to attempt";

/// Whether a preset trains one model or the STL-vs-MTL comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Single,
    Comparison,
}

/// A published reference number for one cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedValue {
    pub arm: String,
    pub task: Task,
    /// One of the summary columns: accuracy, precision, recall, f1_macro, mae, rmse.
    pub metric: String,
    pub value: f64,
}

/// A fully specified experiment. Serializes to the `config.toml` of a report
/// bundle and can be read back with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    /// Which results-table row this preset corresponds to.
    pub provenance: String,
    pub features: String,
    pub averaged: bool,
    pub protocol: Protocol,
    pub oversample: bool,
    pub split: SplitPolicy,
    #[serde(default)]
    pub feature_config: FeatureConfig,
    /// For comparisons, the multi-task model; the single-task arms are derived from it.
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub reported: Vec<ReportedValue>,
}

impl ExperimentPreset {
    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        self.features.parse()
    }

    pub fn feature_request(&self) -> Result<FeatureRequest> {
        Ok(FeatureRequest::new(
            self.feature_spec()?,
            self.feature_config.clone(),
            self.averaged,
        ))
    }

    /// Checks internal consistency, ignoring the speaker count that only the
    /// data can supply.
    pub fn validate(&self) -> Result<()> {
        let req = self.feature_request()?;
        req.config.validate()?;
        self.train.validate()?;
        if self.train.features != self.features {
            return Err(Error::Config(format!(
                "preset {}: train.features {:?} differs from features {:?}",
                self.name, self.train.features, self.features
            )));
        }
        if self.model.input_dim != req.dim() {
            return Err(Error::Config(format!(
                "preset {}: model input_dim {} but {} yields {} rows",
                self.name,
                self.model.input_dim,
                self.features,
                req.dim()
            )));
        }
        let kind = self.model.kind;
        if kind.wants_sequences() && self.averaged {
            return Err(Error::Config(format!(
                "preset {}: {kind:?} needs sequential features",
                self.name
            )));
        }
        if matches!(kind, ModelKind::Mlp | ModelKind::MultitaskMlp) && !self.averaged {
            return Err(Error::Config(format!(
                "preset {}: {kind:?} needs frame-averaged features",
                self.name
            )));
        }
        if self.protocol == Protocol::Comparison && kind != ModelKind::MultitaskMlp {
            return Err(Error::Config(format!(
                "preset {}: comparisons are defined for multitask_mlp only",
                self.name
            )));
        }
        let mut spec = self.model.clone();
        if spec.tasks.contains(&Task::Speaker) && spec.n_speakers.is_none() {
            spec.n_speakers = Some(2);
        }
        spec.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("preset serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        p.validate()?;
        Ok(p)
    }
}

struct Draft {
    name: &'static str,
    provenance: &'static str,
    features: &'static str,
    averaged: bool,
    kind: ModelKind,
    tasks: Vec<Task>,
    reported: Vec<(&'static str, Task, &'static str, f64)>,
}

fn finish(d: Draft) -> ExperimentPreset {
    let spec: FeatureSpec = d.features.parse().expect("built-in feature spec parses");
    let feature_config = FeatureConfig::default();
    let mut model = ModelSpec::new(d.kind, spec.dim(&feature_config), d.tasks);
    if d.kind == ModelKind::MultitaskMlp {
        model.dropout = 0.2;
    }
    let speaker_id = model.tasks.contains(&Task::Speaker);
    let train = TrainConfig {
        epochs: if speaker_id { 100 } else { 60 },
        patience: if speaker_id { None } else { Some(10) },
        features: d.features.to_string(),
        loss_weights: LossWeights::default(),
        ..TrainConfig::default()
    };
    let protocol = if d.name.contains("stl_vs_mtl") {
        Protocol::Comparison
    } else {
        Protocol::Single
    };
    ExperimentPreset {
        name: d.name.to_string(),
        provenance: d.provenance.to_string(),
        features: d.features.to_string(),
        averaged: d.averaged,
        protocol,
        oversample: !speaker_id,
        split: if speaker_id {
            SplitPolicy::SPEAKER_ID
        } else {
            SplitPolicy::default()
        },
        feature_config,
        model,
        train,
        reported: d
            .reported
            .into_iter()
            .map(|(arm, task, metric, value)| ReportedValue {
                arm: arm.to_string(),
                task,
                metric: metric.to_string(),
                value,
            })
            .collect(),
    }
}

fn classification(arm: &'static str, task: Task, acc: f64, prec: f64, rec: f64) -> Vec<(&'static str, Task, &'static str, f64)> {
    vec![
        (arm, task, "accuracy", acc),
        (arm, task, "precision", prec),
        (arm, task, "recall", rec),
    ]
}

fn speaker_row(f1: f64, prec: f64, rec: f64) -> Vec<(&'static str, Task, &'static str, f64)> {
    vec![
        ("STL", Task::Speaker, "f1_macro", f1),
        ("STL", Task::Speaker, "precision", prec),
        ("STL", Task::Speaker, "recall", rec),
    ]
}

fn profiling_rows(
    arm: &'static str,
    accent: (f64, f64, f64),
    gender: (f64, f64, f64),
    age_mae: f64,
) -> Vec<(&'static str, Task, &'static str, f64)> {
    let mut v = classification(arm, Task::Accent, accent.0, accent.1, accent.2);
    v.extend(classification(arm, Task::Gender, gender.0, gender.1, gender.2));
    v.push((arm, Task::Age, "mae", age_mae));
    v
}

const FIVE: &str = "mfcc:40,mel:64,chroma,tonnetz,contrast";

/// Every built-in preset, one per results-table row.
pub fn presets() -> Vec<ExperimentPreset> {
    use ModelKind::*;
    use Task::*;
    let mut drafts = Vec::new();
    for (n, name, acc) in [
        (13, "table1_gender_mfcc13", 0.941),
        (30, "table1_gender_mfcc30", 0.986),
        (40, "table1_gender_mfcc40", 0.986),
    ] {
        drafts.push(Draft {
            name,
            provenance: match n {
                13 => "Table 1: gender, averaged MFCC(13), 3-layer MLP",
                30 => "Table 1: gender, averaged MFCC(30), 3-layer MLP",
                _ => "Table 1: gender, averaged MFCC(40), 3-layer MLP",
            },
            features: match n {
                13 => "mfcc:13",
                30 => "mfcc:30",
                _ => "mfcc:40",
            },
            averaged: true,
            kind: Mlp,
            tasks: vec![Gender],
            reported: classification("STL", Gender, acc, acc, acc),
        });
    }
    drafts.extend([
        Draft {
            name: "table2_accent_cnn_seq_mfcc30",
            provenance: "Table 2: accent, sequential MFCC(30), CNN",
            features: "mfcc:30",
            averaged: false,
            kind: Cnn,
            tasks: vec![Accent],
            reported: classification("STL", Accent, 0.10, 0.13, 0.11),
        },
        Draft {
            name: "table2_accent_lstm_seq_mfcc40",
            provenance: "Table 2: accent, sequential MFCC(40), LSTM",
            features: "mfcc:40",
            averaged: false,
            kind: Lstm,
            tasks: vec![Accent],
            reported: classification("STL", Accent, 0.16, 0.18, 0.16),
        },
        Draft {
            name: "table2_accent_mlp_mfcc40",
            provenance: "Table 2: accent, averaged MFCC(40), MLP",
            features: "mfcc:40",
            averaged: true,
            kind: Mlp,
            tasks: vec![Accent],
            reported: classification("STL", Accent, 0.18, 0.16, 0.18),
        },
        Draft {
            name: "table2_accent_mlp_five",
            provenance: "Table 2: accent, five averaged feature types, MLP",
            features: FIVE,
            averaged: true,
            kind: Mlp,
            tasks: vec![Accent],
            reported: classification("STL", Accent, 0.21, 0.16, 0.21),
        },
        Draft {
            name: "table3_age_mlp",
            provenance: "Table 3: age, averaged MFCC(40), MLP",
            features: "mfcc:40",
            averaged: true,
            kind: Mlp,
            tasks: vec![Age],
            reported: vec![("STL", Age, "mae", 6.16), ("STL", Age, "rmse", 10.82)],
        },
        Draft {
            name: "table3_age_lstm",
            provenance: "Table 3: age, sequential MFCC(30), LSTM",
            features: "mfcc:30",
            averaged: false,
            kind: Lstm,
            tasks: vec![Age],
            reported: vec![("STL", Age, "mae", 6.02), ("STL", Age, "rmse", 10.26)],
        },
        Draft {
            name: "table3_age_cnn",
            provenance: "Table 3: age, sequential MFCC(30), CNN",
            features: "mfcc:30",
            averaged: false,
            kind: Cnn,
            tasks: vec![Age],
            reported: vec![("STL", Age, "mae", 5.53), ("STL", Age, "rmse", 9.24)],
        },
    ]);
    for (features, name, provenance, rows) in [
        (
            "mfcc:13",
            "table4_mtl_cnnlstm_mfcc13",
            "Table 4: multi-task CNN+LSTM, sequential MFCC(13)",
            profiling_rows("MTL", (0.14, 0.14, 0.14), (0.98, 0.98, 0.94), 6.03),
        ),
        (
            "mfcc:25",
            "table4_mtl_cnnlstm_mfcc25",
            "Table 4: multi-task CNN+LSTM, sequential MFCC(25)",
            profiling_rows("MTL", (0.15, 0.14, 0.14), (0.98, 0.99, 0.96), 5.97),
        ),
        (
            "mfcc:40",
            "table4_mtl_cnnlstm_mfcc40",
            "Table 4: multi-task CNN+LSTM, sequential MFCC(40)",
            profiling_rows("MTL", (0.11, 0.11, 0.11), (0.99, 0.99, 0.96), 6.08),
        ),
    ] {
        drafts.push(Draft {
            name,
            provenance,
            features,
            averaged: false,
            kind: MultitaskCnnLstm,
            tasks: Task::PROFILING.to_vec(),
            reported: rows,
        });
    }
    let mut t5 = profiling_rows("MTL", (0.13, 0.14, 0.13), (0.97, 0.97, 0.97), 7.71);
    t5.extend(profiling_rows("STL", (0.16, 0.16, 0.16), (0.98, 0.98, 0.98), 6.66));
    let mut t6 = profiling_rows("MTL", (0.12, 0.15, 0.12), (0.97, 0.97, 0.97), 6.17);
    t6.extend(profiling_rows("STL", (0.15, 0.21, 0.15), (0.99, 0.99, 0.99), 6.18));
    drafts.extend([
        Draft {
            name: "table5_stl_vs_mtl_mfcc_mel",
            provenance: "Table 5: STL vs MTL MLP, averaged MFCC(40)+Mel(64)",
            features: "mfcc:40,mel:64",
            averaged: true,
            kind: MultitaskMlp,
            tasks: Task::PROFILING.to_vec(),
            reported: t5,
        },
        Draft {
            name: "table6_stl_vs_mtl_five",
            provenance: "Table 6: STL vs MTL MLP, five averaged feature types",
            features: FIVE,
            averaged: true,
            kind: MultitaskMlp,
            tasks: Task::PROFILING.to_vec(),
            reported: t6,
        },
    ]);
    for (name, provenance, features, kind, row) in [
        ("table7_speakerid_mlp_mfcc", "Table 7: speaker ID, MFCC(40), 4-layer MLP", "mfcc:40", Mlp, (0.75, 0.83, 0.79)),
        ("table7_speakerid_lstm_mfcc", "Table 7: speaker ID, MFCC(40), 2-layer LSTM", "mfcc:40", Lstm, (0.76, 0.86, 0.80)),
        ("table7_speakerid_mlp_mfcc_mel", "Table 7: speaker ID, MFCC(40)+Mel(64), 4-layer MLP", "mfcc:40,mel:64", Mlp, (0.80, 0.89, 0.84)),
        ("table7_speakerid_lstm_mfcc_mel", "Table 7: speaker ID, MFCC(40)+Mel(64), 2-layer LSTM", "mfcc:40,mel:64", Lstm, (0.83, 0.91, 0.86)),
        ("table7_speakerid_mlp_five", "Table 7: speaker ID, five feature types, 4-layer MLP", FIVE, Mlp, (0.80, 0.88, 0.84)),
        ("table7_speakerid_lstm_five", "Table 7: speaker ID, five feature types, 2-layer LSTM", FIVE, Lstm, (0.83, 0.91, 0.86)),
    ] {
        drafts.push(Draft {
            name,
            provenance,
            features,
            averaged: true,
            kind,
            tasks: vec![Speaker],
            reported: speaker_row(row.0, row.1, row.2),
        });
    }
    drafts.into_iter().map(finish).collect()
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|p| p.name).collect()
}

/// Looks a preset up by name; the error lists every valid name.
pub fn find_preset(name: &str) -> Result<ExperimentPreset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {name:?}; available presets: {}",
                preset_names().join(", ")
            ))
        })
}
