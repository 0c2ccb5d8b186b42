//! HTK-style mel filterbank and the orthonormal DCT-II used for MFCCs.

use std::f64::consts::PI;

use super::config::FeatureConfig;
use crate::{Error, Result};

/// `2595 · log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels × (n_fft/2 + 1)`, row-major, peak weight 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    /// Center frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Applies the bank to one power spectrum column.
    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self
                .row(m)
                .iter()
                .zip(spectrum)
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

/// Builds the bank with `n_mels + 2` edge points equally spaced in mel over `[fmin, fmax]`.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax()));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut weights = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (bin, w) in row.iter_mut().enumerate() {
            let f = cfg.bin_frequency(bin);
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "mel filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; \
                 reduce n_mels ({}) or raise n_fft ({})",
                cfg.n_mels, cfg.n_fft
            )));
        }
    }
    Ok(MelFilterbank {
        n_mels: cfg.n_mels,
        n_bins,
        weights,
        centers_hz: edges[1..=cfg.n_mels].to_vec(),
    })
}

/// Orthonormal DCT-II basis, `n_out × n_in`, row-major.
///
/// Row `k` depends only on `k` and `n_in`, so truncating the output keeps the
/// leading coefficients bit-identical.
pub fn dct_ii_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let mut basis = vec![0.0; n_out * n_in];
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        for n in 0..n_in {
            basis[k * n_in + n] =
                scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos();
        }
    }
    basis
}
