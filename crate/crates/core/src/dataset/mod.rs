//! Corpus ingestion: audio decoding, TIMIT layout scanning, manifests,
//! class balancing and split assignment.

pub mod audio;
pub mod balance;
pub mod manifest;
pub mod synth;
pub mod timit;

pub use audio::{read_audio, write_sphere, write_wav, AudioClip};
pub use balance::{
    combination_counts, hold_out_val_speakers, oversample_balanced, speaker_disjoint_split,
    speaker_split_counts, split_for_speaker_id,
};
pub use manifest::{
    parse_manifest, write_manifest, Accent, Gender, LabelMap, Manifest, SpeakerRecord, Split,
};
pub use synth::SyntheticCorpus;
pub use timit::{read_speaker_meta, scan_timit_layout, Scan, ScanReport, SkipReason};
