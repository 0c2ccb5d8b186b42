//! Scanning of TIMIT-style directory trees.
//!
//! Expected layout: `[TRAIN|TEST/]DRn/<speaker_id>/<utterance>.wav`, with ages
//! supplied by a sidecar CSV (`speaker_id,age`). Directory names are matched
//! case-insensitively; speaker ids are upper-cased.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use walkdir::WalkDir;

use super::audio::read_audio;
use super::manifest::{is_timit_speaker_id, Accent, Gender, Manifest, SpeakerRecord, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    MalformedSpeakerDir(String),
    UnexpectedNesting,
    MissingMetadata(String),
    Undecodable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub files_seen: usize,
    pub skipped: Vec<SkippedFile>,
}

impl ScanReport {
    /// Speakers found on disk but absent from the metadata table.
    pub fn missing_speakers(&self) -> Vec<String> {
        self.skipped
            .iter()
            .filter_map(|s| match &s.reason {
                SkipReason::MissingMetadata(id) => Some(id.clone()),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Scan {
    pub manifest: Manifest,
    pub report: ScanReport,
}

/// Reads the `speaker_id,age` sidecar table.
pub fn read_speaker_meta(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            line: 1,
            reason: format!("{other:?}"),
        },
    })?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.into(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["speaker_id", "age"] {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: "expected header `speaker_id,age`".into(),
        });
    }
    let mut ages = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(0).unwrap_or("").trim().to_ascii_uppercase();
        let age_str = row.get(1).unwrap_or("").trim();
        let age: f64 = age_str.parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            reason: format!("non-numeric age {age_str:?}"),
        })?;
        ages.insert(id, age);
    }
    Ok(ages)
}

fn region_of(name: &str) -> Option<Accent> {
    name.to_ascii_uppercase().parse().ok()
}

fn split_of(dir: &Path) -> Split {
    for comp in dir.components().rev() {
        match comp.as_os_str().to_string_lossy().to_ascii_uppercase().as_str() {
            "TRAIN" => return Split::Train,
            "TEST" => return Split::Test,
            _ => {}
        }
    }
    Split::Unassigned
}

struct Candidate {
    path: PathBuf,
    speaker_id: String,
    accent: Accent,
    split: Split,
}

/// Scans a TIMIT-style tree into a manifest plus a report of skipped files.
///
/// Every audio file under a `DRn` directory counts as seen; it either becomes
/// a record or lands in the skip report. Records come out sorted by path.
pub fn scan_timit_layout(root: impl AsRef<Path>, speaker_meta: impl AsRef<Path>) -> Result<Scan> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a directory"),
        ));
    }
    let ages = read_speaker_meta(speaker_meta)?;

    let mut report = ScanReport::default();
    let mut candidates = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !is_wav {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path);
        let dirs: Vec<String> = rel
            .parent()
            .map(|p| {
                p.components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect()
            })
            .unwrap_or_default();
        let Some(region_pos) = dirs.iter().rposition(|d| region_of(d).is_some()) else {
            continue;
        };
        report.files_seen += 1;
        if region_pos + 2 != dirs.len() {
            report.skipped.push(SkippedFile {
                path: path.to_path_buf(),
                reason: SkipReason::UnexpectedNesting,
            });
            continue;
        }
        let speaker_dir = &dirs[region_pos + 1];
        let speaker_id = speaker_dir.to_ascii_uppercase();
        if !is_timit_speaker_id(&speaker_id) {
            report.skipped.push(SkippedFile {
                path: path.to_path_buf(),
                reason: SkipReason::MalformedSpeakerDir(speaker_dir.clone()),
            });
            continue;
        }
        candidates.push(Candidate {
            path: path.to_path_buf(),
            speaker_id,
            accent: region_of(&dirs[region_pos]).expect("checked above"),
            split: split_of(Path::new(&dirs[..region_pos].join("/"))),
        });
    }

    let mut warned = BTreeSet::new();
    let mut decodable = Vec::new();
    for c in candidates {
        if !ages.contains_key(&c.speaker_id) {
            if warned.insert(c.speaker_id.clone()) {
                warn!("speaker {} has no age in metadata; dropping its files", c.speaker_id);
            }
            report.skipped.push(SkippedFile {
                path: c.path,
                reason: SkipReason::MissingMetadata(c.speaker_id),
            });
            continue;
        }
        decodable.push(c);
    }

    let decoded: Vec<Result<()>> = decodable
        .par_iter()
        .map(|c| read_audio(&c.path).map(|_| ()))
        .collect();

    let mut records = Vec::with_capacity(decodable.len());
    for (c, status) in decodable.into_iter().zip(decoded) {
        if let Err(e) = status {
            report.skipped.push(SkippedFile {
                path: c.path,
                reason: SkipReason::Undecodable(e.to_string()),
            });
            continue;
        }
        let gender = if c.speaker_id.starts_with('F') {
            Gender::F
        } else {
            Gender::M
        };
        records.push(SpeakerRecord {
            age: ages[&c.speaker_id],
            path: c.path,
            speaker_id: c.speaker_id,
            gender,
            accent: c.accent,
            split: c.split,
        });
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    report.skipped.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Scan {
        manifest: Manifest::new(records)?,
        report,
    })
}
