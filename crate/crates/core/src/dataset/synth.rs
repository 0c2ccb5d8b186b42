//! Seeded synthetic corpus in TIMIT layout, for running everything without
//! the licensed corpus.
//!
//! Each speaker gets planted spectral cues that are separable by a linear
//! model on frame-averaged features:
//!
//! - gender: harmonic stack on a low (M, ~120 Hz) or high (F, ~220 Hz) fundamental;
//! - speaker: two resonance tones on a speaker-specific frequency grid;
//! - accent: a weak tone at a region-specific frequency above 5 kHz;
//! - age: the level of a broadband noise floor grows with age.
//!
//! Utterance-level jitter (duration, gain, fundamental, phases, noise) keeps
//! utterances of one speaker distinct.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::audio::{quantize_pcm16, write_sphere, write_wav};
use super::manifest::{Accent, Gender};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub sample_rate: u32,
    pub min_secs: f64,
    pub max_secs: f64,
    pub seed: u64,
    /// Write NIST SPHERE instead of RIFF (TIMIT's own container).
    pub sphere: bool,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            utterances_per_speaker: 10,
            sample_rate: 16000,
            min_secs: 0.8,
            max_secs: 1.2,
            seed: 2024,
            sphere: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub speaker_id: String,
    pub gender: Gender,
    pub accent: Accent,
    pub age: f64,
    pub test: bool,
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub root: PathBuf,
    pub meta_path: PathBuf,
    pub speakers: Vec<SyntheticSpeaker>,
    pub files: usize,
}

fn speaker_id(gender: Gender, index: usize) -> String {
    let mut letters = [b'A'; 3];
    let mut rest = index;
    for slot in letters.iter_mut().rev() {
        *slot = b'A' + (rest % 26) as u8;
        rest /= 26;
    }
    format!(
        "{}{}{}",
        gender,
        std::str::from_utf8(&letters).expect("ascii"),
        rest % 10
    )
}

impl SyntheticCorpus {
    pub fn speakers(&self) -> Vec<SyntheticSpeaker> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_speakers)
            .map(|k| {
                let gender = if k % 2 == 0 { Gender::M } else { Gender::F };
                let accent = Accent::new(((k / 2) % 8 + 1) as u8).expect("region in 1..=8");
                SyntheticSpeaker {
                    speaker_id: speaker_id(gender, k),
                    gender,
                    accent,
                    age: f64::from(rng.random_range(20u32..66)),
                    test: (k / 2) % 4 == 3,
                }
            })
            .collect()
    }

    /// Synthesizes one utterance of speaker `k`.
    pub fn utterance(&self, k: usize, speaker: &SyntheticSpeaker, utt: usize) -> Vec<f32> {
        let sr = f64::from(self.sample_rate);
        let nyquist = sr / 2.0;
        let mut spk_rng = ChaCha8Rng::seed_from_u64(self.seed ^ (0x5eed_0000 + k as u64));
        let f0_base = match speaker.gender {
            Gender::M => 120.0,
            Gender::F => 220.0,
        } * (1.0 + 0.08 * spk_rng.random_range(-1.0..1.0));
        let formant_a = 600.0 + 97.0 * k as f64;
        let formant_b = 2600.0 + 131.0 * k as f64;
        let accent_tone = 5400.0 + 250.0 * f64::from(speaker.accent.region() - 1);
        let noise_level = 0.004 + 0.0004 * (speaker.age - 20.0);

        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add((k * 1000 + utt) as u64),
        );
        let secs = rng.random_range(self.min_secs..=self.max_secs);
        let n = (secs * sr).round() as usize;
        let f0 = f0_base * (1.0 + rng.random_range(-0.015..0.015));
        let gain = rng.random_range(0.6..1.0);

        let mut tones: Vec<(f64, f64, f64)> = Vec::new();
        let mut h = 1;
        while f0 * h as f64 <= 1000.0 {
            tones.push((f0 * h as f64, 0.3 / h as f64, rng.random_range(0.0..TAU)));
            h += 1;
        }
        for (freq, amp) in [(formant_a, 0.15), (formant_b, 0.12), (accent_tone, 0.06)] {
            let freq = freq * (1.0 + rng.random_range(-0.005..0.005));
            if freq < nyquist {
                tones.push((freq, amp, rng.random_range(0.0..TAU)));
            }
        }

        let mut signal: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                let voiced: f64 = tones
                    .iter()
                    .map(|&(f, a, ph)| a * (TAU * f * t + ph).sin())
                    .sum();
                voiced + noise_level * rng.random_range(-1.0..1.0)
            })
            .collect();
        let peak = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let scale = if peak > 0.0 { 0.8 * gain / peak } else { 0.0 };
        for s in &mut signal {
            *s *= scale;
        }
        signal.into_iter().map(|s| s as f32).collect()
    }

    /// Writes the corpus under `root` plus `root/speaker_meta.csv`.
    pub fn generate(&self, root: impl AsRef<Path>) -> Result<GeneratedCorpus> {
        let root = root.as_ref();
        if self.n_speakers == 0 || self.utterances_per_speaker == 0 {
            return Err(Error::Config(
                "synthetic corpus needs at least one speaker and one utterance".into(),
            ));
        }
        let speakers = self.speakers();
        let mut files = 0;
        for (k, spk) in speakers.iter().enumerate() {
            let dir = root
                .join(if spk.test { "TEST" } else { "TRAIN" })
                .join(spk.accent.to_string())
                .join(&spk.speaker_id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for utt in 0..self.utterances_per_speaker {
                let pcm = quantize_pcm16(&self.utterance(k, spk, utt));
                let path = dir.join(format!("SX{utt:02}.WAV"));
                if self.sphere {
                    write_sphere(&path, &pcm, self.sample_rate)?;
                } else {
                    write_wav(&path, &pcm, self.sample_rate)?;
                }
                files += 1;
            }
        }
        let meta_path = root.join("speaker_meta.csv");
        let mut meta = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut body = String::from("speaker_id,age\n");
        for s in &speakers {
            body.push_str(&format!("{},{}\n", s.speaker_id, s.age));
        }
        meta.write_all(body.as_bytes())
            .map_err(|e| Error::io(&meta_path, e))?;
        Ok(GeneratedCorpus {
            root: root.to_path_buf(),
            meta_path,
            speakers,
            files,
        })
    }
}
