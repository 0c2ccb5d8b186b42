use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Lstm,
    Cnn,
    MultitaskMlp,
    MultitaskCnnLstm,
}

impl ModelKind {
    pub fn is_multitask(self) -> bool {
        matches!(self, Self::MultitaskMlp | Self::MultitaskCnnLstm)
    }

    /// Whether the model consumes frame sequences rather than averaged vectors.
    pub fn wants_sequences(self) -> bool {
        matches!(self, Self::Cnn | Self::MultitaskCnnLstm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Accent,
    Gender,
    Age,
    Speaker,
}

impl Task {
    pub const PROFILING: [Task; 3] = [Task::Accent, Task::Gender, Task::Age];

    pub fn name(self) -> &'static str {
        match self {
            Self::Accent => "accent",
            Self::Gender => "gender",
            Self::Age => "age",
            Self::Speaker => "speaker",
        }
    }

    pub fn is_regression(self) -> bool {
        self == Self::Age
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accent" => Ok(Self::Accent),
            "gender" => Ok(Self::Gender),
            "age" => Ok(Self::Age),
            "speaker" => Ok(Self::Speaker),
            other => Err(Error::Config(format!(
                "unknown task {other:?} (expected accent, gender, age or speaker)"
            ))),
        }
    }
}

/// Declarative description of a network. Serialized as TOML inside
/// checkpoints and reports.
///
/// ```toml
/// kind = "multitask_mlp"      # mlp | lstm | cnn | multitask_mlp | multitask_cnn_lstm
/// input_dim = 104             # feature rows (vector width or channels per frame)
/// tasks = ["accent", "gender", "age"]
/// hidden = [256, 128, 64]     # MLP widths; default depends on kind and task
/// conv_channels = [32, 64]
/// kernel_size = 3
/// lstm_hidden = 128
/// lstm_layers = 2             # default 2 for lstm, 1 for multitask_cnn_lstm
/// dropout = 0.2
/// batch_norm = true           # default true for multitask_mlp only
/// n_speakers = 629            # required with the speaker task
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default = "default_conv_channels")]
    pub conv_channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_lstm_hidden")]
    pub lstm_hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lstm_layers: Option<usize>,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_norm: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_speakers: Option<usize>,
}

fn default_conv_channels() -> Vec<usize> {
    vec![32, 64]
}

fn default_kernel() -> usize {
    3
}

fn default_lstm_hidden() -> usize {
    128
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_dim: usize, tasks: Vec<Task>) -> Self {
        Self {
            kind,
            input_dim,
            tasks,
            hidden: None,
            conv_channels: default_conv_channels(),
            kernel_size: default_kernel(),
            lstm_hidden: default_lstm_hidden(),
            lstm_layers: None,
            dropout: 0.0,
            batch_norm: None,
            n_speakers: None,
        }
    }

    /// MLP hidden widths: three layers for profiling, four for speaker ID.
    pub fn hidden_widths(&self) -> Vec<usize> {
        match &self.hidden {
            Some(h) => h.clone(),
            None if self.tasks.contains(&Task::Speaker) => vec![512, 256, 256, 128],
            None => vec![256, 128, 64],
        }
    }

    pub fn lstm_depth(&self) -> usize {
        self.lstm_layers.unwrap_or(match self.kind {
            ModelKind::MultitaskCnnLstm => 1,
            _ => 2,
        })
    }

    pub fn uses_batch_norm(&self) -> bool {
        self.batch_norm
            .unwrap_or(self.kind == ModelKind::MultitaskMlp)
    }

    pub fn head_width(&self, task: Task) -> usize {
        match task {
            Task::Accent => 8,
            Task::Gender => 2,
            Task::Age => 1,
            Task::Speaker => self.n_speakers.unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.kind.is_multitask() {
            if self.tasks.len() < 2 {
                return bad(format!("{:?} needs at least two tasks", self.kind));
            }
        } else if self.tasks.len() != 1 {
            return bad(format!(
                "{:?} is single-task but lists {} tasks",
                self.kind,
                self.tasks.len()
            ));
        }
        let mut seen = self.tasks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.tasks.len() {
            return bad("tasks must not repeat".into());
        }
        if self.tasks.contains(&Task::Speaker) && self.n_speakers.is_none_or(|n| n < 2) {
            return bad("the speaker task needs n_speakers >= 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.hidden_widths().contains(&0) || self.lstm_hidden == 0 || self.lstm_depth() == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.kind.wants_sequences() {
            if self.conv_channels.len() != 2 || self.conv_channels.contains(&0) {
                return bad("conv_channels must list two positive widths".into());
            }
            if self.kernel_size.is_multiple_of(2) {
                return bad(format!("kernel_size {} must be odd", self.kernel_size));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 of the TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Scalar count implied by a spec, computed from layer arithmetic alone.
pub fn param_count(spec: &ModelSpec) -> usize {
    let linear = |i: usize, o: usize| i * o + o;
    let lstm = |i: usize, h: usize| i * 4 * h + h * 4 * h + 4 * h;
    let bn = usize::from(spec.uses_batch_norm());
    let (trunk, width) = match spec.kind {
        ModelKind::Mlp | ModelKind::MultitaskMlp => {
            let mut total = 0;
            let mut w = spec.input_dim;
            for h in spec.hidden_widths() {
                total += linear(w, h) + 2 * h * bn;
                w = h;
            }
            (total, w)
        }
        ModelKind::Lstm => {
            let h = spec.lstm_hidden;
            let total = (0..spec.lstm_depth())
                .map(|l| lstm(if l == 0 { spec.input_dim } else { h }, h))
                .sum();
            (total, h)
        }
        ModelKind::Cnn | ModelKind::MultitaskCnnLstm => {
            let (c0, c1, k) = (spec.conv_channels[0], spec.conv_channels[1], spec.kernel_size);
            let convs = spec.input_dim * c0 * k + c0 + c0 * c1 * k + c1;
            if spec.kind == ModelKind::Cnn {
                (convs, c1)
            } else {
                let h = spec.lstm_hidden;
                let total = (0..spec.lstm_depth())
                    .map(|l| lstm(if l == 0 { c1 } else { h }, h))
                    .sum::<usize>();
                (convs + total, h)
            }
        }
    };
    trunk
        + spec
            .tasks
            .iter()
            .map(|&t| linear(width, spec.head_width(t)))
            .sum::<usize>()
}

/// Per-task loss weights for multi-task training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub accent: f64,
    pub gender: f64,
    pub age: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            accent: 1.0,
            gender: 1.0,
            age: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(accent: f64, gender: f64, age: f64) -> Result<Self> {
        let w = Self {
            accent,
            gender,
            age,
        };
        w.validate()?;
        Ok(w)
    }

    /// Speaker ID only appears in single-task runs and always has weight 1.
    pub fn weight(&self, task: Task) -> f64 {
        match task {
            Task::Accent => self.accent,
            Task::Gender => self.gender,
            Task::Age => self.age,
            Task::Speaker => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.accent, self.gender, self.age];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got {all:?}"
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            accent: self.accent * c,
            gender: self.gender * c,
            age: self.age * c,
        }
    }
}

impl FromStr for LossWeights {
    type Err = Error;

    /// Parses `accent,gender,age`, e.g. `5,1,0.01`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "loss weights {s:?} must have the form accent,gender,age"
            )));
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Config(format!("loss weight {p:?} is not a number")))
            })
            .collect::<Result<_>>()?;
        Self::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for LossWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.accent, self.gender, self.age)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mlp_count() {
        let mut spec = ModelSpec::new(ModelKind::Mlp, 40, vec![Task::Gender]);
        let by_hand = 40 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 2 + 2;
        assert_eq!(by_hand, 51_778);
        assert_eq!(param_count(&spec), by_hand);
        spec.hidden = Some(vec![]);
        assert_eq!(param_count(&spec), 40 * 2 + 2);
    }

    #[test]
    fn task_count_rules() {
        assert!(ModelSpec::new(ModelKind::MultitaskMlp, 10, vec![Task::Age]).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Mlp, 10, vec![Task::Age, Task::Gender])
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Mlp, 10, vec![Task::Speaker]).validate().is_err());
        let mut s = ModelSpec::new(ModelKind::Mlp, 10, vec![Task::Speaker]);
        s.n_speakers = Some(629);
        s.validate().unwrap();
        assert_eq!(s.head_width(Task::Speaker), 629);
        assert_eq!(s.hidden_widths().len(), 4);
    }

    #[test]
    fn toml_round_trip() {
        let mut s = ModelSpec::new(
            ModelKind::MultitaskCnnLstm,
            25,
            vec![Task::Accent, Task::Gender, Task::Age],
        );
        s.dropout = 0.25;
        let text = s.to_toml();
        assert!(text.contains("kind = \"multitask_cnn_lstm\""));
        assert_eq!(ModelSpec::from_toml(&text).unwrap(), s);
        assert!(ModelSpec::from_toml("kind = \"mlp\"\ninput_dim = 4\ntasks = [\"age\"]\nbogus = 1\n").is_err());
    }

    #[test]
    fn weights_parse() {
        let w: LossWeights = "5,1,0.01".parse().unwrap();
        assert_eq!((w.accent, w.gender, w.age), (5.0, 1.0, 0.01));
        assert!("0,0,0".parse::<LossWeights>().is_err());
        assert!("1,-1,0".parse::<LossWeights>().is_err());
        assert!("1,1".parse::<LossWeights>().is_err());
        assert_eq!(w.to_string(), "5,1,0.01");
    }
}
