//! Feature families, feature-set specs, and the extractors behind them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{FeatureConfig, CHROMA_BINS, CONTRAST_BANDS, LOG_FLOOR, TONNETZ_DIMS};
use super::contrast::{contrast_bands, contrast_from_spectrogram};
use super::harmonic::{chroma_from_spectrogram, tonnetz_from_chroma};
use super::mel::{dct_ii_matrix, mel_filterbank, MelFilterbank};
use super::spectrum::{Spectrogram, Stft};
use crate::dataset::AudioClip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Mel,
    Chroma,
    Tonnetz,
    Contrast,
    Concat,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Mel => "mel",
            FeatureKind::Chroma => "chroma",
            FeatureKind::Tonnetz => "tonnetz",
            FeatureKind::Contrast => "contrast",
            FeatureKind::Concat => "concat",
        })
    }
}

/// `coeffs × frames` feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub rows: usize,
    pub frames: usize,
    pub values: Vec<f64>,
    pub config: FeatureConfig,
}

impl FeatureMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.frames..(r + 1) * self.frames]
    }

    pub fn get(&self, r: usize, frame: usize) -> f64 {
        self.values[r * self.frames + frame]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
    pub config: FeatureConfig,
}

/// Output of [`extract_set`]: frame-averaged or sequential.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Vector(FeatureVector),
    Matrix(FeatureMatrix),
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Features::Vector(v) => v.values.len(),
            Features::Matrix(m) => m.rows,
        }
    }

    pub fn frames(&self) -> usize {
        match self {
            Features::Vector(_) => 1,
            Features::Matrix(m) => m.frames,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Features::Vector(v) => &v.values,
            Features::Matrix(m) => &m.values,
        }
    }
}

/// Row-wise arithmetic mean over frames.
pub fn time_average(m: &FeatureMatrix) -> FeatureVector {
    let values = (0..m.rows)
        .map(|r| m.row(r).iter().sum::<f64>() / m.frames as f64)
        .collect();
    FeatureVector {
        kind: m.kind,
        values,
        config: m.config.clone(),
    }
}

/// One entry of a feature-set spec; the count overrides `n_mfcc` / `n_mels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "lowercase")]
pub enum FeatureItem {
    Mfcc(Option<usize>),
    Mel(Option<usize>),
    Chroma,
    Tonnetz,
    Contrast,
}

impl FeatureItem {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureItem::Mfcc(_) => FeatureKind::Mfcc,
            FeatureItem::Mel(_) => FeatureKind::Mel,
            FeatureItem::Chroma => FeatureKind::Chroma,
            FeatureItem::Tonnetz => FeatureKind::Tonnetz,
            FeatureItem::Contrast => FeatureKind::Contrast,
        }
    }

    /// Configuration this item extracts with.
    pub fn config(&self, base: &FeatureConfig) -> FeatureConfig {
        let mut cfg = base.clone();
        match *self {
            FeatureItem::Mfcc(Some(n)) => cfg.n_mfcc = n,
            FeatureItem::Mel(Some(n)) => {
                cfg.n_mels = n;
                cfg.n_mfcc = cfg.n_mfcc.min(n);
            }
            _ => {}
        }
        cfg
    }

    pub fn rows(&self, base: &FeatureConfig) -> usize {
        let cfg = self.config(base);
        match self {
            FeatureItem::Mfcc(_) => cfg.n_mfcc,
            FeatureItem::Mel(_) => cfg.n_mels,
            FeatureItem::Chroma => CHROMA_BINS,
            FeatureItem::Tonnetz => TONNETZ_DIMS,
            FeatureItem::Contrast => CONTRAST_BANDS + 1,
        }
    }
}

impl fmt::Display for FeatureItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureItem::Mfcc(Some(n)) | FeatureItem::Mel(Some(n)) => {
                write!(f, "{}:{n}", self.kind())
            }
            other => write!(f, "{}", other.kind()),
        }
    }
}

/// Ordered list of feature families, e.g. `mfcc:40,mel:64` or `five`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub items: Vec<FeatureItem>,
}

impl FeatureSpec {
    pub fn new(items: Vec<FeatureItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config("feature spec lists no kinds".into()));
        }
        for (i, a) in items.iter().enumerate() {
            if items[..i].iter().any(|b| b.kind() == a.kind()) {
                return Err(Error::Config(format!(
                    "feature kind {} listed twice",
                    a.kind()
                )));
            }
        }
        Ok(Self { items })
    }

    /// MFCC, mel, chroma, tonnetz and contrast.
    pub fn five(n_mfcc: usize, n_mels: usize) -> Self {
        Self {
            items: vec![
                FeatureItem::Mfcc(Some(n_mfcc)),
                FeatureItem::Mel(Some(n_mels)),
                FeatureItem::Chroma,
                FeatureItem::Tonnetz,
                FeatureItem::Contrast,
            ],
        }
    }

    pub fn dim(&self, base: &FeatureConfig) -> usize {
        self.items.iter().map(|i| i.rows(base)).sum()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.items.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut items = Vec::new();
        for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (name, count) = match token.split_once(':') {
                Some((n, c)) => {
                    let c: usize = c.parse().map_err(|_| {
                        Error::Config(format!("bad coefficient count in {token:?}"))
                    })?;
                    (n, Some(c))
                }
                None => (token, None),
            };
            let item = match (name, count) {
                ("five", None) => {
                    items.extend(FeatureSpec::five(40, 64).items);
                    continue;
                }
                ("mfcc", c) => FeatureItem::Mfcc(c),
                ("mel", c) => FeatureItem::Mel(c),
                ("chroma", None) => FeatureItem::Chroma,
                ("tonnetz", None) => FeatureItem::Tonnetz,
                ("contrast", None) => FeatureItem::Contrast,
                _ => {
                    return Err(Error::Config(format!(
                        "unknown feature kind {token:?} (expected mfcc[:n], mel[:n], chroma, \
                         tonnetz, contrast or five)"
                    )))
                }
            };
            items.push(item);
        }
        FeatureSpec::new(items)
    }
}

enum Stage {
    Mfcc { bank: MelFilterbank, dct: Vec<f64>, n_mfcc: usize },
    Mel { bank: MelFilterbank },
    Chroma,
    Tonnetz,
    Contrast { bands: Vec<std::ops::Range<usize>> },
}

/// Prepared extractor for a feature set: one STFT per clip, shared by all kinds.
pub struct SetExtractor {
    base: FeatureConfig,
    stft: Stft,
    stages: Vec<(FeatureItem, FeatureConfig, Stage)>,
}

impl SetExtractor {
    pub fn new(spec: &FeatureSpec, base: &FeatureConfig) -> Result<Self> {
        base.validate()?;
        let spec = FeatureSpec::new(spec.items.clone())?;
        let mut stages = Vec::new();
        for item in spec.items {
            let cfg = item.config(base);
            cfg.validate()?;
            let stage = match item {
                FeatureItem::Mfcc(_) => Stage::Mfcc {
                    bank: mel_filterbank(&cfg)?,
                    dct: dct_ii_matrix(cfg.n_mfcc, cfg.n_mels),
                    n_mfcc: cfg.n_mfcc,
                },
                FeatureItem::Mel(_) => Stage::Mel {
                    bank: mel_filterbank(&cfg)?,
                },
                FeatureItem::Chroma => Stage::Chroma,
                FeatureItem::Tonnetz => Stage::Tonnetz,
                FeatureItem::Contrast => Stage::Contrast {
                    bands: contrast_bands(&cfg)?,
                },
            };
            stages.push((item, cfg, stage));
        }
        Ok(Self {
            stft: Stft::new(base)?,
            base: base.clone(),
            stages,
        })
    }

    pub fn dim(&self) -> usize {
        self.stages.iter().map(|(i, _, _)| i.rows(&self.base)).sum()
    }

    /// Per-kind sequential matrices, in spec order.
    pub fn matrices(&self, clip: &AudioClip) -> Result<Vec<FeatureMatrix>> {
        let spec = self.stft.power(clip)?;
        Ok(self
            .stages
            .iter()
            .map(|(item, cfg, stage)| apply_stage(item.kind(), cfg, stage, &spec))
            .collect())
    }

    pub fn extract(&self, clip: &AudioClip, averaged: bool) -> Result<Features> {
        let parts = self.matrices(clip)?;
        if parts.len() == 1 {
            let m = parts.into_iter().next().expect("one part");
            return Ok(if averaged {
                Features::Vector(time_average(&m))
            } else {
                Features::Matrix(m)
            });
        }
        if averaged {
            let values = parts.iter().flat_map(|m| time_average(m).values).collect();
            Ok(Features::Vector(FeatureVector {
                kind: FeatureKind::Concat,
                values,
                config: self.base.clone(),
            }))
        } else {
            let frames = parts[0].frames;
            let rows = parts.iter().map(|m| m.rows).sum();
            let values = parts.into_iter().flat_map(|m| m.values).collect();
            Ok(Features::Matrix(FeatureMatrix {
                kind: FeatureKind::Concat,
                rows,
                frames,
                values,
                config: self.base.clone(),
            }))
        }
    }
}

fn log_floor(x: f64) -> f64 {
    (x + LOG_FLOOR).ln()
}

fn apply_stage(kind: FeatureKind, cfg: &FeatureConfig, stage: &Stage, spec: &Spectrogram) -> FeatureMatrix {
    let frames = spec.frames;
    let (rows, values) = match stage {
        Stage::Mfcc { bank, dct, n_mfcc } => {
            let log_mel = log_mel(bank, spec);
            let n_mels = bank.n_mels;
            let mut out = vec![0.0; n_mfcc * frames];
            let mut col = vec![0.0; n_mels];
            for frame in 0..frames {
                for (m, c) in col.iter_mut().enumerate() {
                    *c = log_mel[m * frames + frame];
                }
                for k in 0..*n_mfcc {
                    let basis = &dct[k * n_mels..(k + 1) * n_mels];
                    out[k * frames + frame] = basis.iter().zip(&col).map(|(b, x)| b * x).sum();
                }
            }
            (*n_mfcc, out)
        }
        Stage::Mel { bank } => (bank.n_mels, log_mel(bank, spec)),
        Stage::Chroma => (CHROMA_BINS, chroma_from_spectrogram(spec, cfg)),
        Stage::Tonnetz => (
            TONNETZ_DIMS,
            tonnetz_from_chroma(&chroma_from_spectrogram(spec, cfg), frames),
        ),
        Stage::Contrast { bands } => (bands.len(), contrast_from_spectrogram(spec, bands)),
    };
    FeatureMatrix {
        kind,
        rows,
        frames,
        values,
        config: cfg.clone(),
    }
}

fn log_mel(bank: &MelFilterbank, spec: &Spectrogram) -> Vec<f64> {
    let frames = spec.frames;
    let mut out = vec![0.0; bank.n_mels * frames];
    let mut col = vec![0.0; spec.bins];
    let mut mel = vec![0.0; bank.n_mels];
    for frame in 0..frames {
        for (b, c) in col.iter_mut().enumerate() {
            *c = spec.get(b, frame);
        }
        bank.apply(&col, &mut mel);
        for (m, v) in mel.iter().enumerate() {
            out[m * frames + frame] = log_floor(*v);
        }
    }
    out
}

fn single(item: FeatureItem, clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let spec = FeatureSpec { items: vec![item] };
    let mut parts = SetExtractor::new(&spec, cfg)?.matrices(clip)?;
    Ok(parts.remove(0))
}

/// DCT-II (orthonormal) of `ln(mel power + ε)`, first `cfg.n_mfcc` coefficients.
pub fn mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    single(FeatureItem::Mfcc(None), clip, cfg)
}

/// `ln(mel power + ε)`, `cfg.n_mels` rows.
pub fn mel_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    single(FeatureItem::Mel(None), clip, cfg)
}

pub fn chroma(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    single(FeatureItem::Chroma, clip, cfg)
}

pub fn tonnetz(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    single(FeatureItem::Tonnetz, clip, cfg)
}

pub fn spectral_contrast(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    single(FeatureItem::Contrast, clip, cfg)
}

/// Extracts and concatenates the listed kinds row-wise, optionally frame-averaged.
pub fn extract_set(
    clip: &AudioClip,
    spec: &FeatureSpec,
    cfg: &FeatureConfig,
    averaged: bool,
) -> Result<Features> {
    SetExtractor::new(spec, cfg)?.extract(clip, averaged)
}
