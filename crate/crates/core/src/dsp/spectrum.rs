//! Short-time power spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::config::FeatureConfig;
use crate::dataset::AudioClip;
use crate::{Error, Result};

/// Power spectrogram, `bins × frames`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    pub power: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.power[bin * self.frames + frame]
    }

    pub fn column(&self, frame: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.bins).map(move |b| self.get(b, frame))
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub(crate) fn check_rate(clip: &AudioClip, cfg: &FeatureConfig) -> Result<()> {
    if clip.sample_rate() != cfg.sample_rate {
        return Err(Error::Config(format!(
            "clip sample rate {} Hz differs from configured {} Hz (resampling is not supported)",
            clip.sample_rate(),
            cfg.sample_rate
        )));
    }
    Ok(())
}

/// Reusable STFT plan for one configuration.
#[derive(Clone)]
pub struct Stft {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Stft {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            cfg: cfg.clone(),
            window: hann(cfg.win_length),
            fft,
        })
    }

    pub fn power(&self, clip: &AudioClip) -> Result<Spectrogram> {
        check_rate(clip, &self.cfg)?;
        let cfg = &self.cfg;
        let frames = cfg.n_frames(clip.len())?;
        let bins = cfg.n_bins();
        let samples = clip.samples();
        let mut power = vec![0.0; bins * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for frame in 0..frames {
            let start = frame * cfg.hop_length;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (&s, &w)) in samples[start..start + cfg.win_length]
                .iter()
                .zip(&self.window)
                .enumerate()
            {
                buf[i].re = f64::from(s) * w;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (bin, c) in buf[..bins].iter().enumerate() {
                power[bin * frames + frame] = c.norm_sqr();
            }
        }
        Ok(Spectrogram {
            bins,
            frames,
            power,
        })
    }
}

/// `|DFT(hann ⊙ frame)|²` for each frame, non-negative bins only.
pub fn stft_power(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Spectrogram> {
    Stft::new(cfg)?.power(clip)
}
