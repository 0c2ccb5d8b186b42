use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CHROMA_BINS: usize = 12;
pub const TONNETZ_DIMS: usize = 6;
pub const CONTRAST_BANDS: usize = 6;
/// Floor added before every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
}

/// Framing and filterbank parameters shared by every extractor.
///
/// Frames are not centered or padded: frame `i` covers samples
/// `[i·hop, i·hop + win)`, is Hann-weighted and zero-padded to `n_fft`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_fft: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub window: Window,
    pub sample_rate: u32,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub fmax: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop_length: 160,
            win_length: 400,
            window: Window::Hann,
            sample_rate: 16000,
            n_mels: 64,
            n_mfcc: 40,
            fmin: 0.0,
            fmax: None,
        }
    }
}

impl FeatureConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(f64::from(self.sample_rate) / 2.0)
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * f64::from(self.sample_rate) / self.n_fft as f64
    }

    /// `1 + floor((len - win) / hop)`, or an error when the clip is shorter than a window.
    pub fn n_frames(&self, len: usize) -> Result<usize> {
        if len < self.win_length {
            return Err(Error::Config(format!(
                "clip has {len} samples, fewer than one {}-sample window; zero-pad it at ingestion",
                self.win_length
            )));
        }
        Ok(1 + (len - self.win_length) / self.hop_length)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !self.n_fft.is_power_of_two() {
            return fail(format!("n_fft {} is not a power of two", self.n_fft));
        }
        if self.hop_length == 0 || self.hop_length > self.win_length || self.win_length > self.n_fft
        {
            return fail(format!(
                "need 0 < hop_length ({}) <= win_length ({}) <= n_fft ({})",
                self.hop_length, self.win_length, self.n_fft
            ));
        }
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive".into());
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return fail(format!(
                "need 0 < n_mfcc ({}) <= n_mels ({})",
                self.n_mfcc, self.n_mels
            ));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax() && self.fmax() <= nyquist) {
            return fail(format!(
                "need 0 <= fmin ({}) < fmax ({}) <= sample_rate/2 ({nyquist})",
                self.fmin,
                self.fmax()
            ));
        }
        Ok(())
    }
}
