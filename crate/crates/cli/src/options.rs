//! Feature and training flags, and the TOML config file that overrides them.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use spkprof::dsp::{FeatureConfig, FeatureSpec};
use spkprof::experiment::FeatureRequest;
use spkprof::models::LossWeights;
use spkprof::training::TrainConfig;

#[derive(Args, Debug, Clone, Default)]
pub struct FeatureArgs {
    /// Feature kinds, e.g. `mfcc:40,mel:64`, `chroma` or `five` [default: mfcc:40].
    #[arg(long)]
    pub kinds: Option<String>,
    /// Average features over frames (the default).
    #[arg(long, conflicts_with = "sequential")]
    pub avg: bool,
    /// Keep per-frame feature sequences.
    #[arg(long)]
    pub sequential: bool,
    /// Hop length in samples [default: 160].
    #[arg(long)]
    pub hop: Option<usize>,
    /// FFT size in samples [default: 512].
    #[arg(long = "n-fft")]
    pub n_fft: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Multi-task loss weights as `accent,gender,age`.
    #[arg(long, value_name = "A,G,AGE")]
    pub loss_weights: Option<String>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// TOML file whose keys override these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Settings collected from flags and, with higher precedence, a config file.
///
/// Config files use the flag names with underscores:
///
/// ```toml
/// kinds = "mfcc:40,mel:64"
/// averaged = true
/// hop = 160
/// n_fft = 512
/// seed = 7
/// epochs = 30
/// batch = 32
/// lr = 0.001
/// loss_weights = "5,1,0.01"
/// patience = 10
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub kinds: Option<String>,
    pub averaged: Option<bool>,
    pub hop: Option<usize>,
    pub n_fft: Option<usize>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub loss_weights: Option<String>,
    pub patience: Option<usize>,
}

impl Overrides {
    pub fn from_flags(f: &FeatureArgs, t: Option<&TrainArgs>) -> Self {
        let averaged = if f.avg {
            Some(true)
        } else if f.sequential {
            Some(false)
        } else {
            None
        };
        let t = t.cloned().unwrap_or_default();
        Self {
            kinds: f.kinds.clone(),
            averaged,
            hop: f.hop,
            n_fft: f.n_fft,
            seed: t.seed,
            epochs: t.epochs,
            batch: t.batch,
            lr: t.lr,
            loss_weights: t.loss_weights,
            patience: t.patience,
        }
    }

    pub fn load(path: &Path) -> spkprof::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            spkprof::Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| spkprof::Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Flags, then the config file (when given) on top.
    pub fn resolve(f: &FeatureArgs, t: Option<&TrainArgs>, config: Option<&Path>) -> spkprof::Result<Self> {
        let flags = Self::from_flags(f, t);
        match config {
            Some(p) => Ok(flags.overlay(Self::load(p)?)),
            None => Ok(flags),
        }
    }

    fn overlay(self, top: Self) -> Self {
        Self {
            kinds: top.kinds.or(self.kinds),
            averaged: top.averaged.or(self.averaged),
            hop: top.hop.or(self.hop),
            n_fft: top.n_fft.or(self.n_fft),
            seed: top.seed.or(self.seed),
            epochs: top.epochs.or(self.epochs),
            batch: top.batch.or(self.batch),
            lr: top.lr.or(self.lr),
            loss_weights: top.loss_weights.or(self.loss_weights),
            patience: top.patience.or(self.patience),
        }
    }

    pub fn touches_features(&self) -> bool {
        self.kinds.is_some() || self.averaged.is_some() || self.hop.is_some() || self.n_fft.is_some()
    }

    /// Applies the feature settings on top of `base`.
    pub fn feature_request(&self, base: &FeatureRequest) -> spkprof::Result<FeatureRequest> {
        let spec: FeatureSpec = match &self.kinds {
            Some(k) => k.parse()?,
            None => base.spec.clone(),
        };
        let mut config: FeatureConfig = base.config.clone();
        if let Some(h) = self.hop {
            config.hop_length = h;
        }
        if let Some(n) = self.n_fft {
            config.n_fft = n;
        }
        config.validate()?;
        Ok(FeatureRequest::new(spec, config, self.averaged.unwrap_or(base.averaged)))
    }

    pub fn apply_train(&self, cfg: &mut TrainConfig) -> spkprof::Result<()> {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = &self.loss_weights {
            cfg.loss_weights = v.parse::<LossWeights>()?;
        }
        if let Some(v) = self.patience {
            cfg.patience = Some(v);
        }
        cfg.validate()
    }
}

/// `mfcc:40`, frame-averaged, default framing.
pub fn default_request() -> FeatureRequest {
    FeatureRequest::new(
        "mfcc:40".parse().expect("default kinds parse"),
        FeatureConfig::default(),
        true,
    )
}
