use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dsp::FeatureMatrix;
use crate::models::{ModelInput, Task};
use crate::{Error, Result};

/// Class indices and age for one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub accent: usize,
    pub gender: usize,
    pub speaker: usize,
    /// Years.
    pub age: f64,
}

impl Targets {
    pub fn class(&self, task: Task) -> usize {
        match task {
            Task::Accent => self.accent,
            Task::Gender => self.gender,
            Task::Speaker => self.speaker,
            Task::Age => panic!("age is a regression target"),
        }
    }
}

/// One utterance's features (`rows × frames`, row-major) with its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub path: PathBuf,
    pub rows: usize,
    pub frames: usize,
    pub values: Vec<f32>,
    pub targets: Targets,
}

/// Read access to a `rows × frames` feature matrix.
pub trait FrameSource {
    fn rows(&self) -> usize;
    fn frames(&self) -> usize;
    fn at(&self, row: usize, frame: usize) -> f32;
}

impl FrameSource for Example {
    fn rows(&self) -> usize {
        self.rows
    }
    fn frames(&self) -> usize {
        self.frames
    }
    fn at(&self, row: usize, frame: usize) -> f32 {
        self.values[row * self.frames + frame]
    }
}

impl FrameSource for FeatureMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn frames(&self) -> usize {
        self.frames
    }
    fn at(&self, row: usize, frame: usize) -> f32 {
        self.get(row, frame) as f32
    }
}

impl<S: FrameSource + ?Sized> FrameSource for &S {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn frames(&self) -> usize {
        (**self).frames()
    }
    fn at(&self, row: usize, frame: usize) -> f32 {
        (**self).at(row, frame)
    }
}

/// Zero-pads each sequence on the time axis to the batch maximum, giving
/// `[B, F, Tmax]` and the original frame counts.
pub fn pad_batch<S: FrameSource>(seqs: &[S]) -> Result<(Tensor<f32>, Vec<usize>)> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Shape("cannot pad an empty batch".into()))?;
    let f = first.rows();
    if let Some(bad) = seqs.iter().find(|s| s.rows() != f) {
        return Err(Error::Shape(format!(
            "batch mixes {f}-row and {}-row features",
            bad.rows()
        )));
    }
    let lengths: Vec<usize> = seqs.iter().map(|s| s.frames()).collect();
    let t = lengths.iter().copied().max().unwrap_or(0);
    let mut data = vec![0.0f32; seqs.len() * f * t];
    for (b, s) in seqs.iter().enumerate() {
        for r in 0..f {
            let base = (b * f + r) * t;
            for (k, v) in data[base..base + s.frames()].iter_mut().enumerate() {
                *v = s.at(r, k);
            }
        }
    }
    Ok((Tensor::new(vec![seqs.len(), f, t], data)?, lengths))
}

/// Builds model input for a batch: `[B, F]` when every example is a single
/// frame, padded sequences otherwise.
pub fn batch_input(examples: &[&Example]) -> Result<ModelInput> {
    if examples.iter().all(|e| e.frames == 1) {
        let f = examples.first().map_or(0, |e| e.rows);
        if examples.iter().any(|e| e.rows != f) {
            return Err(Error::Shape("batch mixes feature widths".into()));
        }
        let data = examples.iter().flat_map(|e| e.values.iter().copied()).collect();
        Ok(ModelInput::Vectors(Tensor::new(vec![examples.len(), f], data)?))
    } else {
        let (data, lengths) = pad_batch(examples)?;
        Ok(ModelInput::Sequences { data, lengths })
    }
}

/// Train, validation and test examples plus label-space sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub n_speakers: usize,
}

/// Per-coefficient standardization fitted on training features only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    /// Mean and population standard deviation of every feature row, pooled
    /// over all frames of all examples.
    pub fn fit<S: FrameSource>(examples: &[S]) -> Result<Self> {
        let f = examples
            .first()
            .ok_or_else(|| Error::Config("cannot fit normalization on an empty split".into()))?
            .rows();
        let mut sum = vec![0.0f64; f];
        let mut count = 0usize;
        for e in examples {
            for (r, s) in sum.iter_mut().enumerate() {
                *s += (0..e.frames()).map(|t| f64::from(e.at(r, t))).sum::<f64>();
            }
            count += e.frames();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; f];
        for e in examples {
            for (r, s) in sq.iter_mut().enumerate() {
                *s += (0..e.frames())
                    .map(|t| (f64::from(e.at(r, t)) - mean[r]).powi(2))
                    .sum::<f64>();
            }
        }
        let std = sq
            .iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, e: &mut Example) -> Result<()> {
        if e.rows != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} rows, example has {}",
                self.mean.len(),
                e.rows
            )));
        }
        for r in 0..e.rows {
            let (m, s) = (self.mean[r], self.std[r]);
            for v in &mut e.values[r * e.frames..(r + 1) * e.frames] {
                *v = ((f64::from(*v) - m) / s) as f32;
            }
        }
        Ok(())
    }
}

/// Z-scoring of age targets, fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeScaler {
    pub mean: f64,
    pub std: f64,
}

impl AgeScaler {
    pub fn fit(examples: &[Example]) -> Self {
        let n = examples.len().max(1) as f64;
        let mean = examples.iter().map(|e| e.targets.age).sum::<f64>() / n;
        let var = examples
            .iter()
            .map(|e| (e.targets.age - mean).powi(2))
            .sum::<f64>()
            / n;
        Self {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        }
    }

    pub fn forward(&self, years: f64) -> f64 {
        (years - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(rows: usize, frames: usize, values: Vec<f32>) -> Example {
        Example {
            path: PathBuf::new(),
            rows,
            frames,
            values,
            targets: Targets {
                accent: 0,
                gender: 0,
                speaker: 0,
                age: 30.0,
            },
        }
    }

    #[test]
    fn equal_lengths_need_no_padding() {
        let a = ex(2, 3, vec![1.0; 6]);
        let b = ex(2, 3, vec![2.0; 6]);
        let (t, lengths) = pad_batch(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(lengths, vec![3, 3]);
        assert!(!t.data().contains(&0.0));
    }

    #[test]
    fn short_items_are_zero_padded() {
        let a = ex(1, 3, vec![1.0, 2.0, 3.0]);
        let b = ex(1, 5, vec![5.0; 5]);
        let (t, lengths) = pad_batch(&[&a, &b]).unwrap();
        assert_eq!(lengths, vec![3, 5]);
        assert_eq!(&t.data()[..5], &[1.0, 2.0, 3.0, 0.0, 0.0]);
        let c = ex(2, 5, vec![0.0; 10]);
        assert!(pad_batch(&[&a, &c]).is_err());
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let train = vec![ex(2, 1, vec![0.1, 1.0]), ex(2, 1, vec![0.1, 3.0])];
        let s = Standardizer::fit(&train).unwrap();
        let mut e = train[0].clone();
        s.apply(&mut e).unwrap();
        assert!(e.values[0].abs() < 1e-6 && e.values[0].is_finite());
        assert!((e.values[1] + 1.0).abs() < 1e-6);
    }
}
