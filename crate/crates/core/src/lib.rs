//! Speaker profiling toolkit.
//!
//! Extracts acoustic features (MFCC, log-mel, chroma, tonnetz, spectral
//! contrast) from speech audio and trains single-task and multi-task
//! networks for gender, accent, age and speaker-identity prediction on
//! TIMIT-style corpora.
//!
//! The crate is split into the same stages a run goes through:
//!
//! - [`dataset`]: audio decoding, corpus scanning, manifests, balancing and splits.
//! - [`dsp`]: STFT-based feature extractors and the on-disk feature cache.
//! - [`autodiff`]: a small reverse-mode tape over dense tensors plus Adam.
//! - [`models`]: the five network families and multi-task loss weighting.
//! - [`training`]: batching, normalization, the training loop, metrics and reports.
//! - [`experiment`]: feature caching, split policies, named presets and the runner behind them.

pub mod autodiff;
pub mod dataset;
pub mod dsp;
mod error;
pub mod experiment;
pub mod models;
pub mod training;

pub use error::{Error, Result};
