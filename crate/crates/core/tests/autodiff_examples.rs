use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spkprof::autodiff::{
    lstm_forward, softmax_rows, Adam, AdamConfig, LstmLayer, ParamStore, Tape, Tensor,
};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn lstm_zero_weights_stay_zero() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(vec![2, 4, 3], (0..24).map(|i| i as f64 * 0.3 - 2.0).collect()).unwrap();
    let w_hh = t.constant(vec![2, 8], vec![0.0; 16]).unwrap();
    let bias = t.constant(vec![8], vec![0.0; 8]).unwrap();
    let first = LstmLayer {
        w_ih: t.constant(vec![3, 8], vec![0.0; 24]).unwrap(),
        w_hh,
        bias,
    };
    let second = LstmLayer { w_ih: w_hh, w_hh, bias };
    let out = lstm_forward(&mut t, x, &[first, second]).unwrap();
    assert!(t.value(out.outputs).iter().all(|&h| h == 0.0));
}

#[test]
fn lstm_single_step_matches_hand_cell() {
    // H = 1, I = 2; gate columns are (input, forget, cell, output).
    let x = [0.5, -1.0];
    let w_ih = [[0.1, 0.2, -0.3, 0.4], [0.5, -0.6, 0.7, 0.8]];
    let bias = [0.05, -0.1, 0.2, 0.0];
    let pre = |g: usize| x[0] * w_ih[0][g] + x[1] * w_ih[1][g] + bias[g];
    let (i, f, g, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
    let c = f * 0.0 + i * g;
    let h = o * c.tanh();

    let mut t = Tape::<f64>::new();
    let xv = t.constant(vec![1, 1, 2], x.to_vec()).unwrap();
    let layer = LstmLayer {
        w_ih: t
            .constant(vec![2, 4], w_ih.iter().flatten().copied().collect())
            .unwrap(),
        w_hh: t.constant(vec![1, 4], vec![0.9, -0.9, 0.3, 0.1]).unwrap(),
        bias: t.constant(vec![4], bias.to_vec()).unwrap(),
    };
    let out = lstm_forward(&mut t, xv, &[layer]).unwrap();
    assert!((t.value(out.outputs)[0] - h).abs() < 1e-15);
    let (_, cell) = out.final_states[0];
    assert!((t.value(cell)[0] - c).abs() < 1e-15);
}

#[test]
fn batchnorm_train_output_is_standardized() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let (b, f) = (16, 3);
    let data: Vec<f64> = (0..b * f).map(|_| r.random_range(-500.0..500.0)).collect();
    let mut t = Tape::<f64>::new();
    let x = t.constant(vec![b, f], data).unwrap();
    let g = t.constant(vec![f], vec![1.0; f]).unwrap();
    let be = t.constant(vec![f], vec![0.0; f]).unwrap();
    let (y, stats) = t.batchnorm_train(x, g, be, 1e-5).unwrap();
    let yv = t.value(y);
    for j in 0..f {
        let col: Vec<f64> = (0..b).map(|i| yv[i * f + j]).collect();
        let mean = col.iter().sum::<f64>() / b as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b as f64;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-6, "variance {var}");
        assert!(stats.var[j] > 1e3);
    }
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let logits = vec![0.3, -1.2, 2.0, 0.0, 0.5, 0.5];
    let targets = [2, 0];
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::new(vec![2, 3], logits.clone()).unwrap().with_grad());
    let l = t.softmax_cross_entropy(x, &targets).unwrap();
    let grads = t.backward(l, &mut ParamStore::new()).unwrap();
    let p = softmax_rows(&logits, 3);
    for (i, g) in grads.wrt(x).unwrap().iter().enumerate() {
        let onehot = if targets[i / 3] == i % 3 { 1.0 } else { 0.0 };
        assert!((g - (p[i] - onehot) / 2.0).abs() < 1e-15);
    }
}

#[test]
fn adam_two_steps_by_hand() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", Tensor::scalar(0.0));
    let mut adam = Adam::new(
        AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        },
        &store,
    );
    let (b1, b2, eps, lr, g) = (0.9f64, 0.999f64, 1e-8, 0.1, 1.0);
    let (mut m, mut v, mut w) = (0.0, 0.0, 0.0);
    for step in 1..=2 {
        store.zero_grad();
        store.get_mut(id).accumulate_grad(&[g]);
        adam.step(&mut store);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(step));
        let vhat = v / (1.0 - b2.powi(step));
        w -= lr * mhat / (vhat.sqrt() + eps);
        assert!((store.get(id).data()[0] - w).abs() < 1e-12);
    }
    assert!((w + 0.2 / (1.0 + 1e-8)).abs() < 1e-12);
}

#[test]
fn dropout_masks_repeat_under_a_seed() {
    let run = |seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tape::<f32>::new();
        let x = t.constant(vec![4, 8], vec![1.0; 32]).unwrap();
        let y = t.dropout(x, 0.5, || r.random::<f64>()).unwrap();
        t.value(y).to_vec()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..40), k in 1usize..8) {
        let n = logits.len() / k * k;
        prop_assume!(n > 0);
        let p = softmax_rows(&logits[..n], k);
        for row in p.chunks(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut t = Tape::<f64>::new();
        let x = t.constant(vec![n / k, k], logits[..n].to_vec()).unwrap();
        let targets: Vec<usize> = (0..n / k).map(|i| i % k).collect();
        let l = t.softmax_cross_entropy(x, &targets).unwrap();
        prop_assert!(t.scalar(l) >= 0.0);
    }

    #[test]
    fn batchnorm_eval_has_no_batch_coupling(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..8),
        mean in prop::collection::vec(-1.0f64..1.0, 3),
        var in prop::collection::vec(0.1f64..4.0, 3),
    ) {
        let mut t = Tape::<f64>::new();
        let g = t.constant(vec![3], vec![1.5, -0.5, 2.0]).unwrap();
        let b = t.constant(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let x = t.constant(vec![rows.len(), 3], rows.concat()).unwrap();
        let y = t.batchnorm_eval(x, g, b, &mean, &var, 1e-5).unwrap();
        let all = t.value(y).to_vec();
        for (i, row) in rows.iter().enumerate() {
            let xi = t.constant(vec![1, 3], row.clone()).unwrap();
            let yi = t.batchnorm_eval(xi, g, b, &mean, &var, 1e-5).unwrap();
            prop_assert_eq!(&all[i * 3..i * 3 + 3], t.value(yi));
        }
    }
}
