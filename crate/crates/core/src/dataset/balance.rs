//! Class balancing and deterministic split assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{Accent, Gender, Manifest, SpeakerRecord, Split};
use crate::{Error, Result};

/// Counts of each (accent, gender) combination present in `records`.
pub fn combination_counts(records: &[SpeakerRecord]) -> BTreeMap<(Accent, Gender), usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry((r.accent, r.gender)).or_insert(0) += 1;
    }
    counts
}

/// Oversamples every (accent, gender) combination up to the largest one.
///
/// Originals are kept in input order; the drawn duplicates follow, grouped by
/// combination in sorted order. Draws are uniform with replacement from the
/// combination's own records.
pub fn oversample_balanced(records: &[SpeakerRecord], seed: u64) -> Vec<SpeakerRecord> {
    let mut groups: BTreeMap<(Accent, Gender), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.accent, r.gender)).or_default().push(i);
    }
    let max = groups.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = records.to_vec();
    for members in groups.values() {
        for _ in members.len()..max {
            let pick = members[rng.random_range(0..members.len())];
            out.push(records[pick].clone());
        }
    }
    out
}

fn check_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = ratios;
    let ok = [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0) && ((a + b + c) - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )))
    }
}

/// Per-speaker (train, val, test) utterance counts for `n ≥ 3` utterances.
///
/// train = round(r_train·n), val = max(1, round(r_val·n)), test = the rest,
/// clamped so each part keeps at least one utterance. 10 utterances at
/// (0.7, 0.1, 0.2) gives 7/1/2.
pub fn speaker_split_counts(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    debug_assert!(n >= 3);
    let train = ((ratios.0 * n as f64).round() as usize).clamp(1, n - 2);
    let val = ((ratios.1 * n as f64).round() as usize).clamp(1, n - train - 1);
    (train, val, n - train - val)
}

/// Splits each speaker's utterances across train/val/test so every speaker
/// appears in all three partitions.
pub fn split_for_speaker_id(
    manifest: &Manifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Manifest> {
    check_ratios(ratios)?;
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records().iter().enumerate() {
        by_speaker.entry(&r.speaker_id).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Split::Unassigned; manifest.len()];
    for (speaker, mut idx) in by_speaker {
        if idx.len() < 3 {
            return Err(Error::Validation(format!(
                "speaker {speaker} has {} utterances; speaker-id splitting needs at least 3",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let (train, val, _) = speaker_split_counts(idx.len(), ratios);
        for (k, &i) in idx.iter().enumerate() {
            assignment[i] = if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    let mut k = 0;
    Ok(manifest.with_splits(|_| {
        k += 1;
        assignment[k - 1]
    }))
}

/// Speaker-disjoint split: whole speakers go to train/val/test in the given ratios.
///
/// Each partition receives at least one speaker when there are three or more.
pub fn speaker_disjoint_split(
    manifest: &Manifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Manifest> {
    check_ratios(ratios)?;
    let mut speakers: Vec<&str> = manifest.speaker_map.labels().iter().map(String::as_str).collect();
    speakers.sort_unstable();
    if speakers.len() < 3 {
        return Err(Error::Validation(format!(
            "speaker-disjoint split needs at least 3 speakers, found {}",
            speakers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    speakers.shuffle(&mut rng);
    let (train, val, _) = speaker_split_counts(speakers.len(), ratios);
    let assign: BTreeMap<String, Split> = speakers
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let split = if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            };
            (s.to_string(), split)
        })
        .collect();
    Ok(manifest.with_splits(|r| assign[&r.speaker_id]))
}

/// Moves a seeded `fraction` of the training speakers (at least one) into validation.
pub fn hold_out_val_speakers(manifest: &Manifest, fraction: f64, seed: u64) -> Result<Manifest> {
    let mut train_speakers: Vec<&str> = manifest
        .in_split(Split::Train)
        .map(|r| r.speaker_id.as_str())
        .collect();
    train_speakers.sort_unstable();
    train_speakers.dedup();
    if train_speakers.len() < 2 {
        return Err(Error::Validation(
            "need at least two training speakers to hold out validation speakers".into(),
        ));
    }
    let n_val = ((fraction * train_speakers.len() as f64).round() as usize)
        .clamp(1, train_speakers.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train_speakers.shuffle(&mut rng);
    let val: Vec<String> = train_speakers[..n_val].iter().map(|s| s.to_string()).collect();
    Ok(manifest.with_splits(|r| {
        if r.split == Split::Train && val.contains(&r.speaker_id) {
            Split::Val
        } else {
            r.split
        }
    }))
}
