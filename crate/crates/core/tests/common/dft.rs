//! Straight-line reference implementations of the spectral front end.

use std::f64::consts::PI;

/// Power spectrum of one frame by the O(n²) definition. Twiddles are looked
/// up by the exact integer phase `(k · n) mod N` so no angle error accumulates.
pub fn naive_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let cos: Vec<f64> = (0..n_fft).map(|j| (2.0 * PI * j as f64 / n_fft as f64).cos()).collect();
    let sin: Vec<f64> = (0..n_fft).map(|j| (2.0 * PI * j as f64 / n_fft as f64).sin()).collect();
    (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in frame.iter().enumerate() {
                let j = (k * n) % n_fft;
                re += x * cos[j];
                im -= x * sin[j];
            }
            re * re + im * im
        })
        .collect()
}

/// Bins × frames, row-major, no centering, periodic Hann.
pub fn naive_stft_power(samples: &[f32], n_fft: usize, hop: usize, win: usize) -> (usize, Vec<f64>) {
    let frames = 1 + (samples.len() - win) / hop;
    let bins = n_fft / 2 + 1;
    let window: Vec<f64> = (0..win)
        .map(|i| (PI * i as f64 / win as f64).sin().powi(2))
        .collect();
    let mut out = vec![0.0; bins * frames];
    for f in 0..frames {
        let frame: Vec<f64> = (0..win)
            .map(|i| f64::from(samples[f * hop + i]) * window[i])
            .collect();
        for (k, p) in naive_power(&frame, n_fft).into_iter().enumerate() {
            out[k * frames + f] = p;
        }
    }
    (frames, out)
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK filters evaluated case by case on each bin frequency.
pub fn filterbank(n_mels: usize, n_fft: usize, sr: f64, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
    let step = (mel(fmax) - mel(fmin)) / (n_mels + 1) as f64;
    let edge = |i: usize| inv_mel(mel(fmin) + step * i as f64);
    (0..n_mels)
        .map(|m| {
            let (l, c, r) = (edge(m), edge(m + 1), edge(m + 2));
            (0..=n_fft / 2)
                .map(|k| {
                    let f = k as f64 * sr / n_fft as f64;
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// MFCC rows × frames: naive STFT, filterbank, `ln(x + 1e-10)`, orthonormal DCT-II.
pub fn naive_mfcc(
    samples: &[f32],
    n_fft: usize,
    hop: usize,
    win: usize,
    n_mels: usize,
    n_mfcc: usize,
) -> Vec<f64> {
    let (frames, power) = naive_stft_power(samples, n_fft, hop, win);
    let bins = n_fft / 2 + 1;
    let bank = filterbank(n_mels, n_fft, 16000.0, 0.0, 8000.0);
    let mut out = vec![0.0; n_mfcc * frames];
    for f in 0..frames {
        let logmel: Vec<f64> = bank
            .iter()
            .map(|w| {
                let e: f64 = (0..bins).map(|k| w[k] * power[k * frames + f]).sum();
                (e + 1e-10).ln()
            })
            .collect();
        for q in 0..n_mfcc {
            let norm = if q == 0 { 1.0 / n_mels as f64 } else { 2.0 / n_mels as f64 }.sqrt();
            let s: f64 = logmel
                .iter()
                .enumerate()
                .map(|(n, v)| v * (PI * q as f64 * (n as f64 + 0.5) / n_mels as f64).cos())
                .sum();
            out[q * frames + f] = norm * s;
        }
    }
    out
}
