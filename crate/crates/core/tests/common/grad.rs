//! Central finite-difference gradient checks in f64.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spkprof::autodiff::{lstm_forward, LstmLayer, ParamStore, Tape, Tensor, Var};

pub const H: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Builds the graph from fresh leaves, runs backward, then perturbs every
/// input element by ±H and compares against the analytic gradient.
pub fn check<F>(inputs: &[Tensor<f64>], build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.scalar(out)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out, &mut ParamStore::new()).unwrap();

    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

pub fn randn(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Weighted sum of every output element with fixed random weights, so that
/// each output receives a distinct upstream gradient.
pub fn project(tape: &mut Tape<f64>, y: Var, weights: &[f64]) -> Var {
    let shape = tape.shape(y).to_vec();
    let w = tape
        .constant(shape, weights[..tape.value(y).len()].to_vec())
        .unwrap();
    let p = tape.mul(y, w).unwrap();
    tape.sum(p)
}

fn weights(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Result of one op's randomized check: name, worst relative error over all
/// trials, number of trials, and the tolerance it must beat.
pub struct OpCheck {
    pub name: &'static str,
    pub worst: f64,
    pub trials: usize,
    pub tol: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.worst < self.tol && self.trials >= 10
    }
}

const TRIALS: usize = 12;

pub fn linear(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (b, i, o) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..5));
        let ins = [randn(&mut r, vec![b, i]), randn(&mut r, vec![i, o]), randn(&mut r, vec![o])];
        let w = weights(&mut r);
        worst = worst.max(check(&ins, |t, v| {
            let y = t.linear(v[0], v[1], v[2]).unwrap();
            project(t, y, &w)
        }));
    }
    OpCheck { name: "linear", worst, trials: TRIALS, tol: 1e-4 }
}

pub fn conv1d(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (b, ci, co, t) = (
            r.random_range(1..3),
            r.random_range(1..4),
            r.random_range(1..4),
            r.random_range(1..6),
        );
        let ins = [
            randn(&mut r, vec![b, ci, t]),
            randn(&mut r, vec![co, ci, 3]),
            randn(&mut r, vec![co]),
        ];
        let w = weights(&mut r);
        worst = worst.max(check(&ins, |tp, v| {
            let y = tp.conv1d(v[0], v[1], v[2]).unwrap();
            project(tp, y, &w)
        }));
    }
    OpCheck { name: "conv1d", worst, trials: TRIALS, tol: 1e-4 }
}

/// Inputs are a shuffled ladder with 0.05 spacing so no pooling window holds a
/// tie within the finite-difference step.
pub fn maxpool1d(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (b, c, t) = (r.random_range(1..3), r.random_range(1..4), r.random_range(2..8));
        let n = b * c * t;
        let mut ladder: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 1.0).collect();
        ladder.shuffle(&mut r);
        let ins = [Tensor::new(vec![b, c, t], ladder).unwrap()];
        let w = weights(&mut r);
        worst = worst.max(check(&ins, |tp, v| {
            let y = tp.maxpool1d(v[0]).unwrap();
            project(tp, y, &w)
        }));
    }
    OpCheck { name: "maxpool1d", worst, trials: TRIALS, tol: 1e-3 }
}

pub fn lstm(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for trial in 0..TRIALS {
        let (b, t, i, h) = if trial == 0 {
            (2, 3, 2, 3)
        } else {
            (
                r.random_range(1..3),
                r.random_range(1..4),
                r.random_range(1..4),
                r.random_range(1..4),
            )
        };
        let layers = 1 + trial % 2;
        let mut ins = vec![randn(&mut r, vec![b, t, i])];
        let mut width = i;
        for _ in 0..layers {
            ins.push(randn(&mut r, vec![width, 4 * h]));
            ins.push(randn(&mut r, vec![h, 4 * h]));
            ins.push(randn(&mut r, vec![4 * h]));
            width = h;
        }
        worst = worst.max(check(&ins, |tp, v| {
            let layers: Vec<LstmLayer> = v[1..]
                .chunks(3)
                .map(|c| LstmLayer { w_ih: c[0], w_hh: c[1], bias: c[2] })
                .collect();
            let out = lstm_forward(tp, v[0], &layers).unwrap();
            tp.sum(out.outputs)
        }));
    }
    OpCheck { name: "lstm_forward", worst, trials: TRIALS, tol: 1e-3 }
}

pub fn batchnorm(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (b, f) = (r.random_range(2..6), r.random_range(1..5));
        let ins = [randn(&mut r, vec![b, f]), randn(&mut r, vec![f]), randn(&mut r, vec![f])];
        let w = weights(&mut r);
        worst = worst.max(check(&ins, |tp, v| {
            let (y, _) = tp.batchnorm_train(v[0], v[1], v[2], 1e-5).unwrap();
            project(tp, y, &w)
        }));
    }
    OpCheck { name: "batchnorm", worst, trials: TRIALS, tol: 1e-3 }
}

pub fn softmax_ce(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (b, k) = (r.random_range(1..5), r.random_range(2..9));
        let targets: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
        let ins = [randn(&mut r, vec![b, k])];
        worst = worst.max(check(&ins, |tp, v| tp.softmax_cross_entropy(v[0], &targets).unwrap()));
    }
    OpCheck { name: "softmax_cross_entropy", worst, trials: TRIALS, tol: 1e-5 }
}

/// Targets sit at least 0.1 away from every prediction, clear of the kink.
pub fn l1(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let b = r.random_range(1..6);
        let pred = randn(&mut r, vec![b, 1]);
        let target: Vec<f64> = pred
            .data()
            .iter()
            .map(|&p| p + if r.random::<bool>() { 1.0 } else { -1.0 } * r.random_range(0.1..1.0))
            .collect();
        worst = worst.max(check(&[pred], |tp, v| tp.l1_loss(v[0], &target).unwrap()));
    }
    OpCheck { name: "l1_loss", worst, trials: TRIALS, tol: 1e-5 }
}

pub fn mse(seed: u64) -> OpCheck {
    let mut r = super::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let b = r.random_range(1..6);
        let pred = randn(&mut r, vec![b, 1]);
        let target: Vec<f64> = (0..b).map(|_| r.random_range(-2.0..2.0)).collect();
        worst = worst.max(check(&[pred], |tp, v| tp.mse_loss(v[0], &target).unwrap()));
    }
    OpCheck { name: "mse_loss", worst, trials: TRIALS, tol: 1e-5 }
}

pub fn suite(seed: u64) -> Vec<OpCheck> {
    vec![
        linear(seed),
        conv1d(seed + 1),
        maxpool1d(seed + 2),
        lstm(seed + 3),
        batchnorm(seed + 4),
        softmax_ce(seed + 5),
        l1(seed + 6),
        mse(seed + 7),
    ]
}
