//! Utterance records, label maps, and the manifest CSV format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MANIFEST_HEADER: [&str; 6] = ["path", "speaker_id", "gender", "age", "accent", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::M => "M",
            Gender::F => "F",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "M" => Ok(Gender::M),
            "F" => Ok(Gender::F),
            other => Err(format!("unknown gender {other:?} (expected M or F)")),
        }
    }
}

/// TIMIT dialect region, `DR1`..`DR8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Accent(u8);

impl Accent {
    pub const COUNT: usize = 8;

    pub fn new(region: u8) -> Option<Self> {
        (1..=8).contains(&region).then_some(Accent(region))
    }

    /// Region number, 1-based.
    pub fn region(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Accent> {
        (1..=8).map(Accent)
    }
}

impl fmt::Display for Accent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DR{}", self.0)
    }
}

impl FromStr for Accent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.strip_prefix("DR")
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(Accent::new)
            .ok_or_else(|| format!("unknown accent {s:?} (expected DR1..DR8)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" | "" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One utterance and its speaker labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerRecord {
    pub path: PathBuf,
    pub speaker_id: String,
    pub gender: Gender,
    pub age: f64,
    pub accent: Accent,
    pub split: Split,
}

impl SpeakerRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.age > 0.0 && self.age < 120.0) {
            return Err(format!(
                "age {} for {} outside (0, 120)",
                self.age, self.speaker_id
            ));
        }
        if is_timit_speaker_id(&self.speaker_id) {
            let prefix = &self.speaker_id[..1];
            if prefix != self.gender.as_str() {
                return Err(format!(
                    "speaker {} has gender {} but its id prefix says {prefix}",
                    self.speaker_id, self.gender
                ));
            }
        }
        Ok(())
    }
}

/// `FCJF0`-style ids: gender letter, three initials, one digit.
pub fn is_timit_speaker_id(id: &str) -> bool {
    let b = id.as_bytes();
    b.len() == 5
        && matches!(b[0], b'M' | b'F')
        && b[1..4].iter().all(u8::is_ascii_uppercase)
        && b[4].is_ascii_digit()
}

/// Bijection between string labels and dense indices, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl LabelMap {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = Self::default();
        for l in labels {
            map.insert(l.into());
        }
        map
    }

    fn insert(&mut self, label: String) -> usize {
        if let Some(&i) = self.index.get(&label) {
            return i;
        }
        let i = self.labels.len();
        self.index.insert(label.clone(), i);
        self.labels.push(label);
        i
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Ordered, validated set of utterance records plus their label maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<SpeakerRecord>,
    pub gender_map: LabelMap,
    pub accent_map: LabelMap,
    pub speaker_map: LabelMap,
}

impl Manifest {
    pub fn new(records: Vec<SpeakerRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.path.as_path()) {
                return Err(Error::Validation(format!(
                    "duplicate path {} in manifest",
                    r.path.display()
                )));
            }
            r.validate().map_err(Error::Validation)?;
        }
        let gender_map = LabelMap::from_labels(records.iter().map(|r| r.gender.to_string()));
        let accent_map = LabelMap::from_labels(records.iter().map(|r| r.accent.to_string()));
        let speaker_map = LabelMap::from_labels(records.iter().map(|r| r.speaker_id.clone()));
        Ok(Self {
            records,
            gender_map,
            accent_map,
            speaker_map,
        })
    }

    pub fn records(&self) -> &[SpeakerRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SpeakerRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SpeakerRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count_split(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    pub fn speaker_count(&self) -> usize {
        self.speaker_map.len()
    }

    /// Returns a copy with each record's split replaced by `f(record)`.
    pub fn with_splits(&self, mut f: impl FnMut(&SpeakerRecord) -> Split) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.split = f(r);
        }
        out
    }
}

/// Parses a manifest CSV (`path,speaker_id,gender,age,accent,split`).
///
/// Relative paths are resolved against the manifest's own directory.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != MANIFEST_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: format!(
                "header {:?} does not match {:?}",
                names, MANIFEST_HEADER
            ),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |reason: String| Error::Parse {
            path: path.into(),
            line,
            reason,
        };
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let rel = PathBuf::from(field(0));
        if rel.as_os_str().is_empty() {
            return Err(parse_err("empty path".into()));
        }
        let audio_path = if rel.is_absolute() { rel } else { base.join(rel) };
        let speaker_id = field(1).to_string();
        if speaker_id.is_empty() {
            return Err(parse_err("empty speaker_id".into()));
        }
        let gender = field(2).parse().map_err(parse_err)?;
        let age: f64 = field(3)
            .parse()
            .map_err(|_| parse_err(format!("non-numeric age {:?}", field(3))))?;
        let accent = field(4).parse().map_err(parse_err)?;
        let split = field(5).parse().map_err(parse_err)?;
        let record = SpeakerRecord {
            path: audio_path,
            speaker_id,
            gender,
            age,
            accent,
            split,
        };
        record.validate().map_err(parse_err)?;
        records.push(record);
    }
    Manifest::new(records)
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse {
            path: path.into(),
            line,
            reason: format!("{other:?}"),
        },
    }
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for r in manifest.records() {
        writer
            .write_record([
                r.path.to_string_lossy().as_ref(),
                r.speaker_id.as_str(),
                r.gender.as_str(),
                r.age.to_string().as_str(),
                r.accent.to_string().as_str(),
                r.split.as_str(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
