#![allow(dead_code)]

pub mod centroid;
pub mod dft;
pub mod grad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spkprof::dataset::AudioClip;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform noise plus a couple of random tones, scaled to stay inside [-1, 1].
pub fn random_clip(rng: &mut ChaCha8Rng, min_secs: f64, max_secs: f64) -> AudioClip {
    let sr = 16000u32;
    let len = (rng.random_range(min_secs..=max_secs) * sr as f64) as usize;
    let tones: Vec<(f64, f64)> = (0..2)
        .map(|_| (rng.random_range(80.0..7000.0), rng.random_range(0.05..0.3)))
        .collect();
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let tone: f64 = tones
                .iter()
                .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum();
            (0.3 * rng.random_range(-1.0..1.0) + tone) as f32 * 0.9
        })
        .collect();
    AudioClip::new(samples, sr).unwrap()
}

/// `‖a − b‖ / ‖b‖`.
pub fn rel_frobenius(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Generates the default 20-speaker synthetic corpus under `dir` and scans it.
pub fn synthetic_manifest(dir: &std::path::Path) -> spkprof::dataset::Manifest {
    let corpus = spkprof::dataset::SyntheticCorpus::default().generate(dir).unwrap();
    spkprof::dataset::scan_timit_layout(&corpus.root, &corpus.meta_path)
        .unwrap()
        .manifest
}
