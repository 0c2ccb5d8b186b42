//! Octave-band spectral contrast.

use std::ops::Range;

use super::config::{FeatureConfig, CONTRAST_BANDS, LOG_FLOOR};
use super::spectrum::Spectrogram;
use crate::{Error, Result};

/// Lowest octave edge; everything below it forms the first band.
pub const CONTRAST_FMIN: f64 = 200.0;
/// Fraction of a band's bins averaged for its peak and for its valley.
pub const CONTRAST_QUANTILE: f64 = 0.02;

/// Bin ranges of the sub-200 Hz band and the six octave bands `[200·2^k, 200·2^(k+1))`.
/// The last band runs up to and including `fmax`.
pub fn contrast_bands(cfg: &FeatureConfig) -> Result<Vec<Range<usize>>> {
    let fmax = cfg.fmax();
    let mut edges = vec![0.0];
    edges.extend((0..=CONTRAST_BANDS).map(|k| CONTRAST_FMIN * 2f64.powi(k as i32)));
    let last = edges.len() - 1;
    edges[last] = fmax;

    let n_bins = cfg.n_bins();
    let mut bands = Vec::with_capacity(CONTRAST_BANDS + 1);
    for k in 0..=CONTRAST_BANDS {
        let (lo, hi) = (edges[k], edges[k + 1].min(fmax));
        let inclusive = k == CONTRAST_BANDS;
        let bins: Vec<usize> = (0..n_bins)
            .filter(|&b| {
                let f = cfg.bin_frequency(b);
                f >= lo && (f < hi || (inclusive && f <= hi))
            })
            .collect();
        match (bins.first(), bins.last()) {
            (Some(&first), Some(&last)) => bands.push(first..last + 1),
            _ => {
                return Err(Error::Config(format!(
                    "spectral contrast band {k} ({lo:.0}-{hi:.0} Hz) has no FFT bins at \
                     n_fft {} / {} Hz",
                    cfg.n_fft, cfg.sample_rate
                )))
            }
        }
    }
    Ok(bands)
}

/// `ln(peak + ε) − ln(valley + ε)` per band and frame; `7 × frames`.
pub fn contrast_from_spectrogram(spec: &Spectrogram, bands: &[Range<usize>]) -> Vec<f64> {
    let frames = spec.frames;
    let mut out = vec![0.0; bands.len() * frames];
    let mut sorted = Vec::new();
    for (k, band) in bands.iter().enumerate() {
        let take = ((CONTRAST_QUANTILE * band.len() as f64).round() as usize).max(1);
        for frame in 0..frames {
            sorted.clear();
            sorted.extend(band.clone().map(|b| spec.get(b, frame)));
            sorted.sort_by(f64::total_cmp);
            let valley = sorted[..take].iter().sum::<f64>() / take as f64;
            let peak = sorted[sorted.len() - take..].iter().sum::<f64>() / take as f64;
            out[k * frames + frame] = (peak + LOG_FLOOR).ln() - (valley + LOG_FLOOR).ln();
        }
    }
    out
}
