use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ModelKind, ModelSpec, Task};
use crate::autodiff::{
    lstm_forward, BatchStats, LstmLayer, ParamId, ParamStore, Tape, Tensor, Var,
};
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

/// A batch as the networks consume it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    /// `[B, F]` frame-averaged features.
    Vectors(Tensor<f32>),
    /// `[B, F, T]` zero-padded sequences with each item's true frame count.
    Sequences { data: Tensor<f32>, lengths: Vec<usize> },
}

impl ModelInput {
    pub fn batch_size(&self) -> usize {
        match self {
            Self::Vectors(t) | Self::Sequences { data: t, .. } => t.shape()[0],
        }
    }
}

/// Forward mode. Training mode draws dropout masks from the supplied RNG and
/// normalizes with batch statistics.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub heads: Vec<(Task, Var)>,
    /// One entry per batchnorm layer, present in training mode only.
    pub batch_stats: Vec<BatchStats<f32>>,
}

impl ModelOutput {
    pub fn head(&self, task: Task) -> Option<Var> {
        self.heads.iter().find(|(t, _)| *t == task).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    k: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Recurrent {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

/// Batchnorm affine parameters plus running estimates (not trained by gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    gamma: ParamId,
    beta: ParamId,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

#[derive(Debug, Clone)]
enum Trunk {
    Mlp(Vec<(Dense, Option<usize>)>),
    Lstm(Vec<Recurrent>),
    Cnn([Conv; 2]),
    CnnLstm([Conv; 2], Vec<Recurrent>),
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore<f32>,
    trunk: Trunk,
    norms: Vec<NormState>,
    heads: Vec<(Task, Dense)>,
}

struct Init {
    rng: ChaCha8Rng,
    store: ParamStore<f32>,
}

impl Init {
    fn uniform(&mut self, name: String, shape: Vec<usize>, bound: f64) -> ParamId {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound) as f32);
        self.store.add(name, t)
    }

    fn constant(&mut self, name: String, n: usize, v: f32) -> ParamId {
        self.store.add(name, Tensor::from_fn(vec![n], |_| v))
    }

    fn dense(&mut self, name: &str, i: usize, o: usize) -> Dense {
        let bound = (1.0 / i as f64).sqrt();
        Dense {
            w: self.uniform(format!("{name}.weight"), vec![i, o], bound),
            b: self.uniform(format!("{name}.bias"), vec![o], bound),
        }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        let bound = (1.0 / (cin * k) as f64).sqrt();
        Conv {
            k: self.uniform(format!("{name}.weight"), vec![cout, cin, k], bound),
            b: self.uniform(format!("{name}.bias"), vec![cout], bound),
        }
    }

    fn recurrent(&mut self, name: &str, i: usize, h: usize) -> Recurrent {
        let bound = (1.0 / h as f64).sqrt();
        Recurrent {
            w_ih: self.uniform(format!("{name}.w_ih"), vec![i, 4 * h], bound),
            w_hh: self.uniform(format!("{name}.w_hh"), vec![h, 4 * h], bound),
            b: self.uniform(format!("{name}.bias"), vec![4 * h], bound),
        }
    }

    fn norm(&mut self, name: &str, f: usize) -> NormState {
        NormState {
            gamma: self.constant(format!("{name}.gamma"), f, 1.0),
            beta: self.constant(format!("{name}.beta"), f, 0.0),
            running_mean: vec![0.0; f],
            running_var: vec![1.0; f],
        }
    }
}

impl Model {
    /// Builds and initializes a network. Trunk parameters are drawn before the
    /// heads, and heads in task order, so two specs sharing a trunk and a
    /// leading task get identical initial values for those parts.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::new(),
        };
        let mut norms = Vec::new();
        let (trunk, width) = match spec.kind {
            ModelKind::Mlp | ModelKind::MultitaskMlp => {
                let mut layers = Vec::new();
                let mut w = spec.input_dim;
                for (i, h) in spec.hidden_widths().into_iter().enumerate() {
                    let dense = init.dense(&format!("trunk.{i}"), w, h);
                    let norm = spec.uses_batch_norm().then(|| {
                        norms.push(init.norm(&format!("trunk.{i}.bn"), h));
                        norms.len() - 1
                    });
                    layers.push((dense, norm));
                    w = h;
                }
                (Trunk::Mlp(layers), w)
            }
            ModelKind::Lstm => {
                let h = spec.lstm_hidden;
                let layers = (0..spec.lstm_depth())
                    .map(|l| {
                        let i = if l == 0 { spec.input_dim } else { h };
                        init.recurrent(&format!("lstm.{l}"), i, h)
                    })
                    .collect();
                (Trunk::Lstm(layers), h)
            }
            ModelKind::Cnn | ModelKind::MultitaskCnnLstm => {
                let (c0, c1, k) = (spec.conv_channels[0], spec.conv_channels[1], spec.kernel_size);
                let convs = [
                    init.conv("conv.0", spec.input_dim, c0, k),
                    init.conv("conv.1", c0, c1, k),
                ];
                if spec.kind == ModelKind::Cnn {
                    (Trunk::Cnn(convs), c1)
                } else {
                    let h = spec.lstm_hidden;
                    let layers = (0..spec.lstm_depth())
                        .map(|l| {
                            let i = if l == 0 { c1 } else { h };
                            init.recurrent(&format!("lstm.{l}"), i, h)
                        })
                        .collect();
                    (Trunk::CnnLstm(convs, layers), h)
                }
            }
        };
        let heads = spec
            .tasks
            .iter()
            .map(|&t| (t, init.dense(&format!("head.{t}"), width, spec.head_width(t))))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            params: init.store,
            trunk,
            norms,
            heads,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn norms(&self) -> &[NormState] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [NormState] {
        &mut self.norms
    }

    pub fn tasks(&self) -> &[Task] {
        &self.spec.tasks
    }

    /// Number of trunk parameters (everything registered before the first head).
    pub fn trunk_param_tensors(&self) -> usize {
        self.params.len() - 2 * self.heads.len()
    }

    pub fn forward(&self, tape: &mut Tape<f32>, input: &ModelInput, mut mode: Mode<'_>) -> Result<ModelOutput> {
        let mut stats = Vec::new();
        let features = match &self.trunk {
            Trunk::Mlp(layers) => {
                let ModelInput::Vectors(x) = input else {
                    return Err(Error::Shape(format!(
                        "{:?} expects frame-averaged vectors, got sequences",
                        self.spec.kind
                    )));
                };
                self.check_width(x.shape(), 2)?;
                let mut h = tape.leaf(x.clone());
                for (dense, norm) in layers {
                    h = self.dense(tape, h, dense)?;
                    if let Some(n) = norm {
                        h = self.norm(tape, h, *n, &mode, &mut stats)?;
                    }
                    h = tape.relu(h);
                    h = self.dropout(tape, h, &mut mode)?;
                }
                h
            }
            Trunk::Lstm(layers) => {
                let (x, lengths) = match input {
                    ModelInput::Vectors(x) => {
                        self.check_width(x.shape(), 2)?;
                        let b = x.shape()[0];
                        let v = tape.leaf(x.clone());
                        (tape.reshape(v, vec![b, 1, self.spec.input_dim])?, vec![1; b])
                    }
                    ModelInput::Sequences { data, lengths } => {
                        self.check_width(data.shape(), 3)?;
                        let v = tape.leaf(data.clone());
                        (tape.transpose12(v)?, lengths.clone())
                    }
                };
                self.recurrent(tape, x, layers, &lengths)?
            }
            Trunk::Cnn(convs) | Trunk::CnnLstm(convs, _) => {
                let ModelInput::Sequences { data, lengths } = input else {
                    return Err(Error::Shape(format!(
                        "{:?} expects frame sequences, got averaged vectors",
                        self.spec.kind
                    )));
                };
                self.check_width(data.shape(), 3)?;
                let l1: Vec<usize> = lengths.iter().map(|l| l / 2).collect();
                let l2: Vec<usize> = l1.iter().map(|l| l / 2).collect();
                if let Some(short) = lengths.iter().find(|&&l| l < 4) {
                    return Err(Error::Shape(format!(
                        "sequence of {short} frames is too short for two 2x pooling stages (need 4)"
                    )));
                }
                let x = tape.leaf(data.clone());
                let h = self.conv(tape, x, &convs[0])?;
                let h = tape.relu(h);
                let h = tape.maxpool1d(h)?;
                let h = tape.mask_time(h, &l1)?;
                let h = self.conv(tape, h, &convs[1])?;
                let h = tape.relu(h);
                let h = tape.maxpool1d(h)?;
                match &self.trunk {
                    Trunk::CnnLstm(_, layers) => {
                        let seq = tape.transpose12(h)?;
                        self.recurrent(tape, seq, layers, &l2)?
                    }
                    _ => tape.mean_time(h, &l2)?,
                }
            }
        };
        let heads = self
            .heads
            .iter()
            .map(|(t, d)| Ok((*t, self.dense(tape, features, d)?)))
            .collect::<Result<_>>()?;
        Ok(ModelOutput {
            heads,
            batch_stats: stats,
        })
    }

    fn check_width(&self, shape: &[usize], rank: usize) -> Result<()> {
        if shape.len() != rank || shape[1] != self.spec.input_dim || shape[0] == 0 {
            return Err(Error::Shape(format!(
                "model expects {}-wide features, input has shape {shape:?}",
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    fn dense(&self, tape: &mut Tape<f32>, x: Var, d: &Dense) -> Result<Var> {
        let w = tape.param(&self.params, d.w);
        let b = tape.param(&self.params, d.b);
        tape.linear(x, w, b)
    }

    fn conv(&self, tape: &mut Tape<f32>, x: Var, c: &Conv) -> Result<Var> {
        let k = tape.param(&self.params, c.k);
        let b = tape.param(&self.params, c.b);
        tape.conv1d(x, k, b)
    }

    fn recurrent(&self, tape: &mut Tape<f32>, x: Var, layers: &[Recurrent], lengths: &[usize]) -> Result<Var> {
        let layers: Vec<LstmLayer> = layers
            .iter()
            .map(|r| LstmLayer {
                w_ih: tape.param(&self.params, r.w_ih),
                w_hh: tape.param(&self.params, r.w_hh),
                bias: tape.param(&self.params, r.b),
            })
            .collect();
        let out = lstm_forward(tape, x, &layers)?;
        let last: Vec<usize> = lengths.iter().map(|l| l - 1).collect();
        tape.gather_time(out.outputs, &last)
    }

    fn norm(
        &self,
        tape: &mut Tape<f32>,
        x: Var,
        idx: usize,
        mode: &Mode<'_>,
        stats: &mut Vec<BatchStats<f32>>,
    ) -> Result<Var> {
        let n = &self.norms[idx];
        let gamma = tape.param(&self.params, n.gamma);
        let beta = tape.param(&self.params, n.beta);
        if mode.is_train() {
            let (y, s) = tape.batchnorm_train(x, gamma, beta, BN_EPS)?;
            stats.push(s);
            Ok(y)
        } else {
            tape.batchnorm_eval(x, gamma, beta, &n.running_mean, &n.running_var, BN_EPS)
        }
    }

    fn dropout(&self, tape: &mut Tape<f32>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        match mode {
            Mode::Train(rng) if self.spec.dropout > 0.0 => {
                tape.dropout(x, self.spec.dropout, || rng.random::<f64>())
            }
            _ => Ok(x),
        }
    }

    /// Folds training-mode batch statistics into the running estimates
    /// (momentum 0.1, unbiased variance).
    pub fn update_running_stats(&mut self, stats: &[BatchStats<f32>]) {
        for (n, s) in self.norms.iter_mut().zip(stats) {
            let correction = if s.batch > 1 {
                s.batch as f32 / (s.batch - 1) as f32
            } else {
                1.0
            };
            for j in 0..n.running_mean.len() {
                n.running_mean[j] =
                    (1.0 - BN_MOMENTUM) * n.running_mean[j] + BN_MOMENTUM * s.mean[j];
                n.running_var[j] =
                    (1.0 - BN_MOMENTUM) * n.running_var[j] + BN_MOMENTUM * s.var[j] * correction;
            }
        }
    }

    /// Eval-mode forward returning each head's values.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<(Task, Tensor<f32>)>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input, Mode::Eval)?;
        Ok(out
            .heads
            .iter()
            .map(|&(t, v)| (t, tape.to_tensor(v)))
            .collect())
    }
}
