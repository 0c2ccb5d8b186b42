//! Acoustic feature extraction: power STFT, log-mel, MFCC, chroma, tonnetz
//! and spectral contrast, in sequential or frame-averaged form.

pub mod cache;
pub mod config;
pub mod contrast;
pub mod features;
pub mod harmonic;
pub mod mel;
pub mod spectrum;

pub use cache::{cache_key, read_cache, read_cache_header, write_cache, CacheHeader, CachedRecord, FeatureCache};
pub use config::{FeatureConfig, Window, CHROMA_BINS, CONTRAST_BANDS, LOG_FLOOR, TONNETZ_DIMS};
pub use features::{
    chroma, extract_set, mel_features, mfcc, spectral_contrast, time_average, tonnetz,
    FeatureItem, FeatureKind, FeatureMatrix, FeatureSpec, FeatureVector, Features, SetExtractor,
};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use spectrum::{hann, stft_power, Spectrogram, Stft};
