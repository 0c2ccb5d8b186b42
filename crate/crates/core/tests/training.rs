use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spkprof::models::{LossWeights, Model, ModelKind, ModelSpec, Task};
use spkprof::training::{
    evaluate, evaluate_classification, evaluate_regression, run_comparison, stl_specs_for, train,
    Example, Normalization, SplitData, Standardizer, Targets, TaskMetrics, TrainConfig,
};
use spkprof::Error;

fn example(values: Vec<f32>, targets: Targets) -> Example {
    Example {
        path: PathBuf::new(),
        rows: values.len(),
        frames: 1,
        values,
        targets,
    }
}

/// Two Gaussian blobs separated along every axis, with labels derived for all
/// three profiling tasks from the blob and a couple of coordinates.
fn blobs(seed: u64, n: usize, dim: usize) -> Vec<Example> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = i % 2;
            let centre = if class == 0 { -2.0 } else { 2.0 };
            let v: Vec<f32> = (0..dim)
                .map(|_| centre + r.random_range(-1.0f32..1.0))
                .collect();
            let accent = (i / 2) % 8;
            let t = Targets {
                accent,
                gender: class,
                speaker: 0,
                age: 25.0 + 10.0 * class as f64 + f64::from(v[0]),
            };
            example(v, t)
        })
        .collect()
}

fn split(seed: u64, dim: usize) -> SplitData {
    SplitData {
        train: blobs(seed, 64, dim),
        val: blobs(seed + 1, 16, dim),
        test: blobs(seed + 2, 32, dim),
        n_speakers: 0,
    }
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        patience: None,
        ..TrainConfig::default()
    }
}

fn gender_mlp(dim: usize) -> ModelSpec {
    let mut s = ModelSpec::new(ModelKind::Mlp, dim, vec![Task::Gender]);
    s.hidden = Some(vec![16, 8]);
    s
}

fn class(m: &TaskMetrics) -> &spkprof::training::ClassificationMetrics {
    m.as_classification().unwrap()
}

#[test]
fn hand_computed_confusion_example() {
    // Truth rows, predicted columns: [[1, 1], [0, 2]].
    let truth = [0, 0, 1, 1];
    let pred = [0, 1, 1, 1];
    let m = evaluate_classification(&pred, &truth, 2).unwrap();
    assert_eq!(m.confusion, vec![vec![1, 1], vec![0, 2]]);
    assert_eq!(m.accuracy, 0.75);
    assert!((m.precision - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(m.recall, 0.75);
    let f1 = (2.0 * 0.5 / 1.5 + 2.0 * (2.0 / 3.0) / (5.0 / 3.0)) / 2.0;
    assert!((m.f1 - f1).abs() < 1e-15);
}

#[test]
fn perfect_predictor_and_absent_classes() {
    let truth = [0, 2, 2, 0, 2];
    let m = evaluate_classification(&truth, &truth, 4).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    assert_eq!(m.excluded_classes, vec![1, 3]);
    for (i, row) in m.confusion.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            assert!(i == j || c == 0);
        }
    }
}

#[test]
fn regression_examples() {
    let m = evaluate_regression(&[10.0, 20.0], &[10.0, 20.0]).unwrap();
    assert_eq!((m.mae, m.rmse), (0.0, 0.0));
    let m = evaluate_regression(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
    assert_eq!(m.mae, 3.5);
    assert_eq!(m.rmse, 12.5f64.sqrt());
}

#[test]
fn standardizer_fits_train_only() {
    let mut data = split(1, 5);
    let s = Standardizer::fit(&data.train).unwrap();
    for e in &mut data.train {
        s.apply(e).unwrap();
    }
    for j in 0..5 {
        let col: Vec<f64> = data.train.iter().map(|e| f64::from(e.values[j])).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        assert!(mean.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
    }
    let mut changed = split(1, 5);
    changed.test.iter_mut().for_each(|e| e.values[0] += 100.0);
    let refit = Standardizer::fit(&changed.train).unwrap();
    assert_eq!(refit, Standardizer::fit(&split(1, 5).train).unwrap());
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = split(2, 6);
    let model = Model::build(&gender_mlp(6), 3).unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        ..small_cfg(1)
    };
    let trained = train(model.clone(), &data, &cfg).unwrap();
    assert_eq!(trained.history.epochs.len(), 1);
    for ((_, after), (_, before)) in trained.model.params().iter().zip(model.params().iter()) {
        assert_eq!(after.data(), before.data());
    }
}

/// Plain logistic regression by batch gradient descent, in f64.
fn logistic_separates(data: &[Example]) -> bool {
    let dim = data[0].rows;
    let mut w = vec![0.0f64; dim + 1];
    for _ in 0..500 {
        let mut g = vec![0.0; dim + 1];
        for e in data {
            let z: f64 = w[dim] + (0..dim).map(|j| w[j] * f64::from(e.values[j])).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - e.targets.gender as f64;
            (0..dim).for_each(|j| g[j] += err * f64::from(e.values[j]));
            g[dim] += err;
        }
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= 0.1 * gi / data.len() as f64);
    }
    data.iter().all(|e| {
        let z: f64 = w[dim] + (0..dim).map(|j| w[j] * f64::from(e.values[j])).sum::<f64>();
        (z > 0.0) == (e.targets.gender == 1)
    })
}

#[test]
fn separable_data_is_learned() {
    let data = split(4, 8);
    assert!(logistic_separates(&data.train));
    let trained = train(Model::build(&gender_mlp(8), 5).unwrap(), &data, &small_cfg(50)).unwrap();
    let m = evaluate(&trained, &data.train).unwrap();
    assert!(class(&m[0].1).accuracy >= 0.99);
}

#[test]
fn same_seed_same_parameters() {
    let data = split(6, 8);
    let mut spec = ModelSpec::new(ModelKind::MultitaskMlp, 8, Task::PROFILING.to_vec());
    spec.hidden = Some(vec![12, 8]);
    spec.dropout = 0.3;
    let run = || train(Model::build(&spec, 7).unwrap(), &data, &small_cfg(4)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.model.norms(), b.model.norms());
    assert_eq!(a.history, b.history);
}

#[test]
fn nan_features_abort_with_location() {
    let mut data = split(8, 4);
    data.train[3].values[1] = f32::NAN;
    let cfg = TrainConfig {
        normalization: Normalization::None,
        ..small_cfg(3)
    };
    match train(Model::build(&gender_mlp(4), 0).unwrap(), &data, &cfg) {
        Err(Error::NonFinite {
            epoch, component, ..
        }) => {
            assert_eq!(epoch, 1);
            assert_eq!(component, "gender");
        }
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

#[test]
fn empty_validation_is_a_config_error() {
    let mut data = split(9, 4);
    data.val.clear();
    let err = train(Model::build(&gender_mlp(4), 0).unwrap(), &data, &small_cfg(1)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

fn comparison_spec(dim: usize) -> ModelSpec {
    let mut s = ModelSpec::new(ModelKind::MultitaskMlp, dim, Task::PROFILING.to_vec());
    s.hidden = Some(vec![16, 12, 8]);
    s.dropout = 0.2;
    s
}

#[test]
fn accent_only_mtl_equals_stl_accent() {
    let data = split(10, 8);
    let mtl = comparison_spec(8);
    let stl = stl_specs_for(&mtl).unwrap();
    let cfg = TrainConfig {
        loss_weights: LossWeights::new(1.0, 0.0, 0.0).unwrap(),
        ..small_cfg(5)
    };
    let report = run_comparison(&stl, &mtl, &cfg, &data).unwrap();
    let a = report.run("stl-accent").unwrap();
    let m = report.run("mtl").unwrap();
    assert_eq!(a.metric(Task::Accent), m.metric(Task::Accent));
    assert_eq!(a.trained.history.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>(),
               m.trained.history.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>());
    let trunk = a.trained.model.trunk_param_tensors();
    let ta: Vec<_> = a.trained.model.params().iter().take(trunk + 2).collect();
    let tm: Vec<_> = m.trained.model.params().iter().take(trunk + 2).collect();
    assert_eq!(ta, tm);
}

#[test]
fn comparison_report_shape_and_bytes() {
    let data = split(11, 6);
    let mtl = comparison_spec(6);
    let stl = stl_specs_for(&mtl).unwrap();
    let cfg = small_cfg(2);
    let a = run_comparison(&stl, &mtl, &cfg, &data).unwrap();
    let b = run_comparison(&stl, &mtl, &cfg, &data).unwrap();
    let rows = a.rows();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r.arm == "STL").count(), 3);
    assert_eq!(a.summary_text(), b.summary_text());
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.history_jsonl(), b.history_jsonl());
    assert_eq!(a.summary_csv().lines().count(), 7);
    assert!(a.history_jsonl().lines().next().unwrap().starts_with("{\"run\":\"stl-accent\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mae_never_exceeds_rmse(errors in prop::collection::vec(-100.0f64..100.0, 1..50)) {
        let zeros = vec![0.0; errors.len()];
        let m = evaluate_regression(&errors, &zeros).unwrap();
        prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
    }

    #[test]
    fn classification_metric_invariants(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..60)
    ) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = evaluate_classification(&pred, &truth, 5).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for (c, row) in m.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), truth.iter().filter(|&&t| t == c).count());
        }
    }
}
