use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Macro-averaged classification scores. Confusion rows are true classes,
/// columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Vec<Vec<usize>>,
    /// Classes that appear in neither truth nor prediction; left out of the
    /// macro averages.
    pub excluded_classes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskMetrics {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

impl TaskMetrics {
    pub fn as_classification(&self) -> Option<&ClassificationMetrics> {
        match self {
            Self::Classification(c) => Some(c),
            Self::Regression(_) => None,
        }
    }

    pub fn as_regression(&self) -> Option<&RegressionMetrics> {
        match self {
            Self::Regression(r) => Some(r),
            Self::Classification(_) => None,
        }
    }
}

/// Scores predictions against truth over `n_classes` labels.
///
/// Per-class precision (recall) is 0 when nothing was predicted as (labelled
/// with) that class; macro values are unweighted means over the classes that
/// occur in truth or prediction.
pub fn evaluate_classification(
    predicted: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<ClassificationMetrics> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if let Some(&c) = predicted.iter().chain(truth).find(|&&c| c >= n_classes) {
        return Err(Error::Validation(format!(
            "class {c} outside 0..{n_classes}"
        )));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let correct = (0..n_classes).map(|c| confusion[c][c]).sum::<usize>();
    let (mut ps, mut rs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
    let mut excluded = Vec::new();
    for c in 0..n_classes {
        let support: usize = confusion[c].iter().sum();
        let predicted_c: usize = confusion.iter().map(|row| row[c]).sum();
        if support == 0 && predicted_c == 0 {
            excluded.push(c);
            continue;
        }
        let tp = confusion[c][c] as f64;
        let p = if predicted_c > 0 { tp / predicted_c as f64 } else { 0.0 };
        let r = if support > 0 { tp / support as f64 } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        ps.push(p);
        rs.push(r);
        fs.push(f);
    }
    if !excluded.is_empty() {
        log::debug!("classes {excluded:?} absent from truth and prediction; excluded from macro averages");
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        precision: mean(&ps),
        recall: mean(&rs),
        f1: mean(&fs),
        confusion,
        excluded_classes: excluded,
    })
}

pub fn evaluate_regression(predicted: &[f64], truth: &[f64]) -> Result<RegressionMetrics> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Validation(format!(
            "{} predictions for {} targets",
            predicted.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let abs: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    let sq: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(RegressionMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

/// Index of the largest value, first one on ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
