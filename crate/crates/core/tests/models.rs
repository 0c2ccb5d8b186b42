use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spkprof::autodiff::{lstm_forward, LstmLayer, ParamStore, Tape, Tensor};
use spkprof::models::{
    combined_loss, load_checkpoint, param_count, save_checkpoint, LossWeights, Mode, Model,
    ModelInput, ModelKind, ModelSpec, Task,
};
use spkprof::Error;

fn vectors(seed: u64, b: usize, f: usize) -> ModelInput {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    ModelInput::Vectors(Tensor::from_fn(vec![b, f], |_| r.random_range(-1.0..1.0)))
}

fn sequences(seed: u64, f: usize, lengths: &[usize]) -> ModelInput {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let b = lengths.len();
    let t = *lengths.iter().max().unwrap();
    let mut data = Tensor::zeros(vec![b, f, t]);
    for (i, &len) in lengths.iter().enumerate() {
        for c in 0..f {
            for s in 0..len {
                data.data_mut()[(i * f + c) * t + s] = r.random_range(-1.0..1.0);
            }
        }
    }
    ModelInput::Sequences {
        data,
        lengths: lengths.to_vec(),
    }
}

fn small(kind: ModelKind, input_dim: usize, tasks: Vec<Task>) -> ModelSpec {
    let mut s = ModelSpec::new(kind, input_dim, tasks);
    s.hidden = Some(vec![16, 8]);
    s.conv_channels = vec![4, 6];
    s.lstm_hidden = 5;
    s
}

fn mtl() -> Vec<Task> {
    Task::PROFILING.to_vec()
}

fn widths(model: &Model, input: &ModelInput) -> Vec<(Task, Vec<usize>)> {
    model
        .predict(input)
        .unwrap()
        .into_iter()
        .map(|(t, v)| (t, v.shape().to_vec()))
        .collect()
}

#[test]
fn counts_match_registered_tensors() {
    let specs = [
        ModelSpec::new(ModelKind::Mlp, 40, vec![Task::Gender]),
        ModelSpec::new(ModelKind::MultitaskMlp, 104, mtl()),
        ModelSpec::new(ModelKind::Lstm, 40, vec![Task::Accent]),
        ModelSpec::new(ModelKind::Cnn, 30, vec![Task::Age]),
        ModelSpec::new(ModelKind::MultitaskCnnLstm, 25, mtl()),
    ];
    for spec in specs {
        let model = Model::build(&spec, 1).unwrap();
        assert_eq!(model.params().num_elements(), param_count(&spec), "{:?}", spec.kind);
    }
}

#[test]
fn mlp_shapes() {
    let spec = ModelSpec::new(ModelKind::Mlp, 40, vec![Task::Gender]);
    let model = Model::build(&spec, 0).unwrap();
    assert_eq!(model.params().num_elements(), 51_778);
    assert_eq!(widths(&model, &vectors(1, 5, 40)), vec![(Task::Gender, vec![5, 2])]);

    let mut logistic = spec.clone();
    logistic.hidden = Some(vec![]);
    let model = Model::build(&logistic, 0).unwrap();
    assert_eq!(model.params().len(), 2);
    assert_eq!(widths(&model, &vectors(1, 3, 40)), vec![(Task::Gender, vec![3, 2])]);
}

#[test]
fn wrong_feature_width_is_a_shape_error() {
    let model = Model::build(&ModelSpec::new(ModelKind::Mlp, 40, vec![Task::Gender]), 0).unwrap();
    assert!(matches!(model.predict(&vectors(1, 2, 13)), Err(Error::Shape(_))));
    assert!(matches!(model.predict(&sequences(1, 40, &[5])), Err(Error::Shape(_))));
}

#[test]
fn cnn_pooling_limits() {
    let model = Model::build(&small(ModelKind::Cnn, 30, vec![Task::Age]), 0).unwrap();
    assert_eq!(widths(&model, &sequences(2, 30, &[4, 9])), vec![(Task::Age, vec![2, 1])]);
    assert!(matches!(model.predict(&sequences(2, 30, &[3])), Err(Error::Shape(_))));
    assert!(matches!(model.predict(&sequences(2, 30, &[3, 8])), Err(Error::Shape(_))));
}

#[test]
fn lstm_zero_weights_give_constant_logits() {
    let mut model = Model::build(&small(ModelKind::Lstm, 6, vec![Task::Accent]), 0).unwrap();
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        model.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let out = model.predict(&sequences(3, 6, &[2, 5, 7])).unwrap();
    assert_eq!(out[0].1.shape(), &[3, 8]);
    assert!(out[0].1.data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_model_single_step_uses_the_cell() {
    let mut spec = small(ModelKind::Lstm, 2, vec![Task::Gender]);
    spec.lstm_layers = Some(1);
    let model = Model::build(&spec, 4).unwrap();
    let input = vectors(5, 1, 2);
    let got = model.predict(&input).unwrap().remove(0).1;

    let ModelInput::Vectors(x) = &input else { unreachable!() };
    let p = model.params();
    let mut tape = Tape::<f32>::new();
    let ids: Vec<_> = p.ids().collect();
    let xv = tape.constant(vec![1, 1, 2], x.data().to_vec()).unwrap();
    let layer = LstmLayer {
        w_ih: tape.param(p, ids[0]),
        w_hh: tape.param(p, ids[1]),
        bias: tape.param(p, ids[2]),
    };
    let out = lstm_forward(&mut tape, xv, &[layer]).unwrap();
    let (h, _) = out.final_states[0];
    let (w, b) = (tape.param(p, ids[3]), tape.param(p, ids[4]));
    let y = tape.linear(h, w, b).unwrap();
    assert_eq!(tape.value(y), got.data());
}

#[test]
fn multitask_heads_and_determinism() {
    let model = Model::build(&ModelSpec::new(ModelKind::MultitaskMlp, 104, mtl()), 0).unwrap();
    let input = vectors(6, 4, 104);
    let expected = vec![
        (Task::Accent, vec![4, 8]),
        (Task::Gender, vec![4, 2]),
        (Task::Age, vec![4, 1]),
    ];
    assert_eq!(widths(&model, &input), expected);
    assert_eq!(model.predict(&input).unwrap(), model.predict(&input).unwrap());

    let mut spec = ModelSpec::new(ModelKind::MultitaskMlp, 104, mtl());
    spec.hidden = Some(vec![7]);
    let model = Model::build(&spec, 0).unwrap();
    assert_eq!(widths(&model, &input), expected);
}

#[test]
fn cnn_lstm_accepts_each_mfcc_width() {
    for dim in [13, 25, 40] {
        let model = Model::build(&small(ModelKind::MultitaskCnnLstm, dim, mtl()), 0).unwrap();
        let w: Vec<usize> = widths(&model, &sequences(7, dim, &[9, 12]))
            .into_iter()
            .map(|(_, s)| s[1])
            .collect();
        assert_eq!(w, vec![8, 2, 1]);
    }
}

/// Forward in training mode, compute each task loss, combine, and backward.
fn grads_for(model: &mut Model, input: &ModelInput, weights: &LossWeights) -> Vec<Option<Vec<f32>>> {
    let b = input.batch_size();
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model.forward(&mut tape, input, Mode::Train(&mut rng)).unwrap();
    let mut losses = Vec::new();
    for &(task, v) in &out.heads {
        let l = match task {
            Task::Age => tape.mse_loss(v, &vec![0.5; b]).unwrap(),
            Task::Gender => tape.softmax_cross_entropy(v, &vec![1; b]).unwrap(),
            _ => tape.softmax_cross_entropy(v, &(0..b).map(|i| i % 8).collect::<Vec<_>>()).unwrap(),
        };
        losses.push((task, l));
    }
    let loss = combined_loss(&mut tape, &losses, weights).unwrap();
    model.params_mut().zero_grad();
    tape.backward(loss, model.params_mut()).unwrap();
    model.params().iter().map(|(_, t)| t.grad().map(|g| g.to_vec())).collect()
}

#[test]
fn cnn_lstm_gradient_reaches_first_conv() {
    let mut model = Model::build(&small(ModelKind::MultitaskCnnLstm, 13, mtl()), 0).unwrap();
    let g = grads_for(&mut model, &sequences(8, 13, &[8, 11]), &LossWeights::new(1.0, 1.0, 0.001).unwrap());
    let conv0 = g[0].as_ref().expect("conv.0.weight has a gradient");
    assert!(conv0.iter().any(|&v| v != 0.0));
}

#[test]
fn accent_only_weight_matches_accent_loss() {
    let mut spec = small(ModelKind::MultitaskMlp, 10, mtl());
    spec.dropout = 0.0;
    let input = vectors(9, 6, 10);
    let mut a = Model::build(&spec, 3).unwrap();
    let mut b = a.clone();
    let weighted = grads_for(&mut a, &input, &LossWeights::new(1.0, 0.0, 0.0).unwrap());
    let mut accent_spec = spec.clone();
    accent_spec.tasks = vec![Task::Accent];
    accent_spec.kind = ModelKind::MultitaskMlp;
    let alone = grads_for(&mut b, &input, &LossWeights::new(1.0, 0.0, 0.0).unwrap());
    assert_eq!(weighted, alone);
    let trunk = a.trunk_param_tensors();
    assert!(weighted[..trunk].iter().all(|g| g.as_ref().is_some_and(|g| g.iter().any(|&v| v != 0.0))));
    // Accent head has gradients; gender and age heads were left out.
    assert!(weighted[trunk].is_some());
    assert!(weighted[trunk + 2..].iter().all(Option::is_none));

    // Same trunk gradient as the accent loss on its own, built by hand.
    let b_size = input.batch_size();
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = a.forward(&mut tape, &input, Mode::Train(&mut rng)).unwrap();
    let targets: Vec<usize> = (0..b_size).map(|i| i % 8).collect();
    let l = tape.softmax_cross_entropy(out.head(Task::Accent).unwrap(), &targets).unwrap();
    let mut store = a.params().clone();
    store.zero_grad();
    tape.backward(l, &mut store).unwrap();
    let direct: Vec<_> = store.iter().map(|(_, t)| t.grad().map(|g| g.to_vec())).collect();
    assert_eq!(direct, weighted);
}

#[test]
fn trunk_init_shared_between_stl_and_mtl() {
    let mut stl = ModelSpec::new(ModelKind::Mlp, 104, vec![Task::Accent]);
    stl.batch_norm = Some(true);
    let mtl_spec = ModelSpec::new(ModelKind::MultitaskMlp, 104, mtl());
    let (a, b) = (Model::build(&stl, 42).unwrap(), Model::build(&mtl_spec, 42).unwrap());
    let n = a.params().len();
    let pa: Vec<_> = a.params().iter().collect();
    let pb: Vec<_> = b.params().iter().take(n).collect();
    assert_eq!(pa, pb);
}

#[test]
fn checkpoint_round_trip_and_hash_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut model = Model::build(&small(ModelKind::MultitaskMlp, 12, mtl()), 8).unwrap();
    model.norms_mut()[0].running_mean[0] = 0.25;
    save_checkpoint(&path, &model, &serde_json::json!({"note": "x"})).unwrap();
    let (loaded, meta): (Model, serde_json::Value) = load_checkpoint(&path).unwrap();
    assert_eq!(meta["note"], "x");
    assert_eq!(loaded.params(), model.params());
    assert_eq!(loaded.norms(), model.norms());
    let input = vectors(1, 3, 12);
    assert_eq!(loaded.predict(&input).unwrap(), model.predict(&input).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let pos = text.find("input_dim = 12").unwrap();
    bytes[pos + "input_dim = 1".len()] = b'3';
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint::<serde_json::Value>(&path).unwrap_err();
    assert!(err.to_string().contains("hash mismatch"), "{err}");
}

#[test]
fn batched_and_solo_forwards_agree() {
    let kinds = [
        (ModelKind::Cnn, vec![Task::Age]),
        (ModelKind::Lstm, vec![Task::Accent]),
        (ModelKind::MultitaskCnnLstm, mtl()),
    ];
    let lengths = [5, 12, 8, 9];
    for (kind, tasks) in kinds {
        let model = Model::build(&small(kind, 7, tasks), 11).unwrap();
        let batched = model.predict(&sequences(12, 7, &lengths)).unwrap();
        let ModelInput::Sequences { data, .. } = sequences(12, 7, &lengths) else { unreachable!() };
        let t = data.shape()[2];
        for (i, &len) in lengths.iter().enumerate() {
            let mut solo = Tensor::zeros(vec![1, 7, len]);
            for c in 0..7 {
                for s in 0..len {
                    solo.data_mut()[c * len + s] = data.data()[(i * 7 + c) * t + s];
                }
            }
            let alone = model
                .predict(&ModelInput::Sequences { data: solo, lengths: vec![len] })
                .unwrap();
            for ((_, a), (_, b)) in alone.iter().zip(&batched) {
                let w = a.shape()[1];
                for j in 0..w {
                    let d = (a.data()[j] - b.data()[i * w + j]).abs();
                    assert!(d < 1e-6, "{kind:?} item {i}: {d}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn param_count_matches_brute_force(
        kind in prop::sample::select(vec![
            ModelKind::Mlp, ModelKind::Lstm, ModelKind::Cnn,
            ModelKind::MultitaskMlp, ModelKind::MultitaskCnnLstm,
        ]),
        input_dim in 1usize..20,
        hidden in prop::collection::vec(1usize..12, 0..4),
        c0 in 1usize..6, c1 in 1usize..6, lstm_hidden in 1usize..6, layers in 1usize..3,
        bn in any::<bool>(),
    ) {
        let tasks = if kind.is_multitask() { mtl() } else { vec![Task::Age] };
        let mut spec = ModelSpec::new(kind, input_dim, tasks);
        spec.hidden = Some(hidden);
        spec.conv_channels = vec![c0, c1];
        spec.lstm_hidden = lstm_hidden;
        spec.lstm_layers = Some(layers);
        spec.batch_norm = Some(bn);
        let model = Model::build(&spec, 0).unwrap();
        prop_assert_eq!(model.params().num_elements(), param_count(&spec));
    }

    #[test]
    fn scaling_weights_scales_gradient(c in 0.01f64..100.0, wa in 0.0f64..5.0, wg in 0.0f64..5.0, wq in 0.01f64..5.0) {
        let run = |w: LossWeights| {
            let mut store = ParamStore::<f64>::new();
            let id = store.add("x", Tensor::new(vec![2, 3], vec![0.3, -0.2, 1.0, 0.5, 0.1, -0.7]).unwrap());
            let mut tape = Tape::new();
            let x = tape.param(&store, id);
            let ce = tape.softmax_cross_entropy(x, &[2, 0]).unwrap();
            let g = tape.slice_cols(x, 0, 2).unwrap();
            let ge = tape.softmax_cross_entropy(g, &[1, 1]).unwrap();
            let a = tape.slice_cols(x, 2, 1).unwrap();
            let ae = tape.mse_loss(a, &[0.0, 1.0]).unwrap();
            let l = combined_loss(&mut tape, &[(Task::Accent, ce), (Task::Gender, ge), (Task::Age, ae)], &w).unwrap();
            tape.backward(l, &mut store).unwrap();
            store.get(id).grad().unwrap().to_vec()
        };
        let w = LossWeights::new(wa, wg, wq).unwrap();
        let base = run(w);
        let scaled = run(w.scaled(c));
        for (b, s) in base.iter().zip(&scaled) {
            prop_assert!((s - c * b).abs() <= 1e-12 * (c * b).abs().max(1e-12));
        }
        let pow2 = run(w.scaled(4.0));
        for (b, s) in base.iter().zip(&pow2) {
            prop_assert_eq!(*s, 4.0 * b);
        }
    }
}
