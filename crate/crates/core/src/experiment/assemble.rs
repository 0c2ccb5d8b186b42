use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    hold_out_val_speakers, oversample_balanced, split_for_speaker_id, Gender, Manifest,
    SpeakerRecord, Split,
};
use crate::dsp::FeatureCache;
use crate::training::{Example, SplitData, Targets};
use crate::{Error, Result};

/// How manifest records are divided into train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Keep the corpus train/test assignment and move a seeded fraction of
    /// the training speakers to validation.
    Corpus { val_fraction: f64 },
    /// Split every speaker's utterances across all three partitions.
    PerSpeaker { train: f64, val: f64, test: f64 },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self::Corpus { val_fraction: 0.1 }
    }
}

impl SplitPolicy {
    pub const SPEAKER_ID: SplitPolicy = SplitPolicy::PerSpeaker {
        train: 0.7,
        val: 0.1,
        test: 0.2,
    };
}

/// Applies `policy` and returns the manifest with every record assigned.
pub fn assign_splits(manifest: &Manifest, policy: SplitPolicy, seed: u64) -> Result<Manifest> {
    match policy {
        SplitPolicy::Corpus { val_fraction } => {
            if !(val_fraction > 0.0 && val_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "validation fraction {val_fraction} must lie in (0, 1)"
                )));
            }
            if manifest.count_split(Split::Val) > 0 {
                return Ok(manifest.clone());
            }
            if manifest.count_split(Split::Test) == 0 {
                return Err(Error::Validation(
                    "manifest has no test records; use a per-speaker split".into(),
                ));
            }
            hold_out_val_speakers(manifest, val_fraction, seed)
        }
        SplitPolicy::PerSpeaker { train, val, test } => {
            split_for_speaker_id(manifest, (train, val, test), seed)
        }
    }
}

/// Class indices for one record: accent is the dialect region minus one,
/// gender is 0 for male and 1 for female, speaker follows the manifest's
/// speaker label map.
pub fn targets_for(manifest: &Manifest, record: &SpeakerRecord) -> Result<Targets> {
    let speaker = manifest
        .speaker_map
        .index_of(&record.speaker_id)
        .ok_or_else(|| Error::Validation(format!("unknown speaker {}", record.speaker_id)))?;
    Ok(Targets {
        accent: usize::from(record.accent.region() - 1),
        gender: match record.gender {
            Gender::M => 0,
            Gender::F => 1,
        },
        speaker,
        age: record.age,
    })
}

/// Joins records with their cached features.
pub fn examples_for<'a>(
    records: impl IntoIterator<Item = &'a SpeakerRecord>,
    manifest: &Manifest,
    cache: &FeatureCache,
) -> Result<Vec<Example>> {
    let index: HashMap<&str, usize> = cache
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.path.as_str(), i))
        .collect();
    records
        .into_iter()
        .map(|r| {
            let key = r.path.display().to_string();
            let c = index.get(key.as_str()).map(|&i| &cache.records[i]).ok_or_else(|| {
                Error::Shape(format!("feature cache has no entry for {key}"))
            })?;
            Ok(Example {
                path: r.path.clone(),
                rows: c.rows,
                frames: c.cols,
                values: c.values.clone(),
                targets: targets_for(manifest, r)?,
            })
        })
        .collect()
}

/// Builds train/val/test examples from an assigned manifest. With
/// `oversample`, only the training records are balanced over
/// (accent, gender).
pub fn assemble(manifest: &Manifest, cache: &FeatureCache, oversample: bool, seed: u64) -> Result<SplitData> {
    let in_split = |s: Split| manifest.in_split(s).cloned().collect::<Vec<_>>();
    let mut train = in_split(Split::Train);
    if oversample {
        let before = train.len();
        train = oversample_balanced(&train, seed);
        log::info!("oversampled training records {before} -> {}", train.len());
    }
    Ok(SplitData {
        train: examples_for(&train, manifest, cache)?,
        val: examples_for(&in_split(Split::Val), manifest, cache)?,
        test: examples_for(&in_split(Split::Test), manifest, cache)?,
        n_speakers: manifest.speaker_count(),
    })
}
