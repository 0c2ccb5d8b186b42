//! Nearest-centroid classifier used to confirm that a dataset is separable.

pub fn fit_predict(train: &[Vec<f64>], labels: &[usize], test: &[Vec<f64>]) -> Vec<usize> {
    let dim = train[0].len();
    let k = labels.iter().max().unwrap() + 1;
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (x, &y) in train.iter().zip(labels) {
        counts[y] += 1;
        sums[y].iter_mut().zip(x).for_each(|(s, v)| *s += v);
    }
    let centroids: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    test.iter()
        .map(|x| {
            let mut best = (f64::INFINITY, 0);
            for (c, cen) in centroids.iter().enumerate() {
                if let Some(cen) = cen {
                    let d: f64 = cen.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, c);
                    }
                }
            }
            best.1
        })
        .collect()
}

/// Per-feature z-scoring fitted on `train`.
pub fn standardize(train: &mut [Vec<f64>], test: &mut [Vec<f64>]) {
    let dim = train[0].len();
    let n = train.len() as f64;
    for j in 0..dim {
        let mean = train.iter().map(|x| x[j]).sum::<f64>() / n;
        let var = train.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-8);
        for x in train.iter_mut().chain(test.iter_mut()) {
            x[j] = (x[j] - mean) / sd;
        }
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Macro F1 over classes present in truth or prediction.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).max().unwrap() + 1;
    let mut f1s = Vec::new();
    for c in 0..k {
        let tp = pred.iter().zip(truth).filter(|&(&p, &t)| p == c && t == c).count() as f64;
        let pp = pred.iter().filter(|&&p| p == c).count() as f64;
        let ap = truth.iter().filter(|&&t| t == c).count() as f64;
        if pp == 0.0 && ap == 0.0 {
            continue;
        }
        let prec = if pp > 0.0 { tp / pp } else { 0.0 };
        let rec = if ap > 0.0 { tp / ap } else { 0.0 };
        f1s.push(if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 });
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}
