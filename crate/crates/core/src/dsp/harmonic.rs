//! Pitch-class (chroma) folding and the tonnetz projection.

use std::f64::consts::TAU;

use super::config::{CHROMA_BINS, TONNETZ_DIMS};
use super::spectrum::Spectrogram;
use super::config::FeatureConfig;

/// Frequency of C1; pitch class 0 is C.
pub const C1_HZ: f64 = 32.7032;

/// Interval (in semitones) and radius of each tonnetz circle:
/// fifths, minor thirds, major thirds.
pub const TONNETZ_CIRCLES: [(f64, f64); 3] = [(7.0, 1.0), (3.0, 1.0), (4.0, 0.5)];

/// `round(12·log2(f / C1)) mod 12`.
pub fn pitch_class(freq: f64) -> usize {
    ((12.0 * (freq / C1_HZ).log2()).round() as i64).rem_euclid(12) as usize
}

/// Folds spectral power onto 12 pitch classes (bin 0 excluded); each nonzero
/// column is scaled to a maximum of 1. Output is `12 × frames`.
pub fn chroma_from_spectrogram(spec: &Spectrogram, cfg: &FeatureConfig) -> Vec<f64> {
    let classes: Vec<usize> = (0..spec.bins)
        .map(|b| if b == 0 { 0 } else { pitch_class(cfg.bin_frequency(b)) })
        .collect();
    let frames = spec.frames;
    let mut out = vec![0.0; CHROMA_BINS * frames];
    for frame in 0..frames {
        let mut col = [0.0f64; CHROMA_BINS];
        for (b, &class) in classes.iter().enumerate().skip(1) {
            col[class] += spec.get(b, frame);
        }
        let max = col.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            col.iter_mut().for_each(|c| *c /= max);
        }
        for (p, c) in col.iter().enumerate() {
            out[p * frames + frame] = *c;
        }
    }
    out
}

/// Projects one chroma frame onto the six tonnetz coordinates, ordered
/// `(sin, cos)` per circle. The frame is L1-normalized first; an all-zero
/// frame maps to zeros.
pub fn tonnetz_frame(chroma: &[f64]) -> [f64; TONNETZ_DIMS] {
    let total: f64 = chroma.iter().map(|c| c.abs()).sum();
    let mut out = [0.0; TONNETZ_DIMS];
    if total == 0.0 {
        return out;
    }
    for (i, &(interval, radius)) in TONNETZ_CIRCLES.iter().enumerate() {
        let (mut s, mut c) = (0.0, 0.0);
        for (p, &weight) in chroma.iter().enumerate() {
            let theta = TAU * p as f64 * interval / 12.0;
            s += weight / total * theta.sin();
            c += weight / total * theta.cos();
        }
        out[2 * i] = radius * s;
        out[2 * i + 1] = radius * c;
    }
    out
}

/// `12 × frames` chroma to `6 × frames` tonnetz.
pub fn tonnetz_from_chroma(chroma: &[f64], frames: usize) -> Vec<f64> {
    let mut out = vec![0.0; TONNETZ_DIMS * frames];
    let mut col = [0.0; CHROMA_BINS];
    for frame in 0..frames {
        for (p, c) in col.iter_mut().enumerate() {
            *c = chroma[p * frames + frame];
        }
        for (d, v) in tonnetz_frame(&col).iter().enumerate() {
            out[d * frames + frame] = *v;
        }
    }
    out
}
