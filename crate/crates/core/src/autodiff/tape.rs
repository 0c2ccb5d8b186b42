use super::tensor::{ParamId, ParamStore, Real, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols { x: Var, start: usize },
    Reshape(Var),
    Conv1d { x: Var, k: Var, b: Var },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Transpose12(Var),
    TimeStep { x: Var, t: usize },
    StackTime(Vec<Var>),
    GatherTime { x: Var, idx: Vec<usize> },
    MaskTime { x: Var, lengths: Vec<usize> },
    MeanTime { x: Var, lengths: Vec<usize> },
    Dropout { x: Var, mask: Vec<T> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    FeatureAffine { x: Var, gamma: Var, beta: Var, mean: Vec<T>, inv_std: Vec<T> },
    SoftmaxCe { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    L1 { pred: Var, target: Vec<T> },
    Mse { pred: Var, target: Vec<T> },
    Sum(Var),
    WeightedSum(Vec<(Var, T)>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
    needs_grad: bool,
}

/// Batch statistics produced by a training-mode batchnorm, used by the caller
/// to update its running estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance over the batch.
    pub var: Vec<T>,
    pub batch: usize,
}

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Append-only record of a forward computation. Nodes are stored in creation
/// order, which is a topological order, so backward is a single reverse sweep.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

fn shape_err<S: Into<String>>(msg: S) -> Error {
    Error::Shape(msg.into())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, value: Vec<T>, shape: Vec<usize>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf. Gradients are tracked for it when `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let rg = tensor.requires_grad;
        let shape = tensor.shape().to_vec();
        self.push(tensor.into_data(), shape, Op::Leaf, rg)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var> {
        Ok(self.leaf(Tensor::new(shape, data)?))
    }

    /// Records a parameter; backward adds its gradient into the store.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err(format!("matmul: cannot multiply {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, vec![m, n], Op::MatMul(a, b), ng))
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(shape_err(format!("bias {sb:?} does not match input {sx:?}")));
        }
        let o = sb[0];
        let bv = self.value(b);
        let out: Vec<T> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i % o])
            .collect();
        let shape = sx.to_vec();
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(out, shape, Op::AddBias(x, b), ng))
    }

    /// `x W + b` with `x: [B, I]`, `W: [I, O]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] || sb != [sw[1]] {
            return Err(shape_err(format!(
                "linear: input {sx:?} incompatible with weight {sw:?} and bias {sb:?}"
            )));
        }
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push(out, shape, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > T::zero() || v.is_nan() { v } else { T::zero() })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), |v| v.tanh())
    }

    /// Columns `start..start + len` of a `[B, N]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || start + len > s[1] {
            return Err(shape_err(format!(
                "slice {start}..{} out of range for {s:?}",
                start + len
            )));
        }
        let (b, n) = (s[0], s[1]);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(b * len);
        for r in 0..b {
            out.extend_from_slice(&xv[r * n + start..r * n + start + len]);
        }
        let ng = self.ng(x);
        Ok(self.push(out, vec![b, len], Op::SliceCols { x, start }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(shape_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        let out = self.value(x).to_vec();
        let ng = self.ng(x);
        Ok(self.push(out, shape, Op::Reshape(x), ng))
    }

    /// Stride-1 cross-correlation with zero padding `(W - 1) / 2`, so the time
    /// axis is preserved. `x: [B, Cin, T]`, `k: [Cout, Cin, W]` with odd `W`.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (sx, sk, sb) = (self.shape(x), self.shape(k), self.shape(b));
        if sx.len() != 3 || sk.len() != 3 || sk[2] % 2 == 0 {
            return Err(shape_err(format!("conv1d: input {sx:?}, kernel {sk:?}")));
        }
        if sx[1] != sk[1] {
            return Err(shape_err(format!(
                "conv1d: input has {} channels but kernel {sk:?} expects {}",
                sx[1], sk[1]
            )));
        }
        if sb != [sk[0]] {
            return Err(shape_err(format!("conv1d: bias {sb:?} for kernel {sk:?}")));
        }
        let (bs, cin, t) = (sx[0], sx[1], sx[2]);
        let (cout, w) = (sk[0], sk[2]);
        let pad = (w / 2) as isize;
        let (xv, kv, bv) = (self.value(x), self.value(k), self.value(b));
        let mut out = vec![T::zero(); bs * cout * t];
        for bi in 0..bs {
            for o in 0..cout {
                let row = &mut out[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                row.iter_mut().for_each(|v| *v = bv[o]);
                for c in 0..cin {
                    let xr = &xv[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                    for j in 0..w {
                        let kw = kv[(o * cin + c) * w + j];
                        let off = j as isize - pad;
                        let (lo, hi) = valid_range(t, off);
                        for tt in lo..hi {
                            row[tt] += kw * xr[(tt as isize + off) as usize];
                        }
                    }
                }
            }
        }
        let ng = self.ng(x) || self.ng(k) || self.ng(b);
        Ok(self.push(out, vec![bs, cout, t], Op::Conv1d { x, k, b }, ng))
    }

    /// Kernel 2, stride 2 max pooling over the last axis of `[B, C, T]`.
    /// Ties route the gradient to the first element of the window.
    pub fn maxpool1d(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || s[2] < 2 {
            return Err(shape_err(format!(
                "maxpool1d needs [B, C, T] with T >= 2, got {s:?}"
            )));
        }
        let (bs, c, t) = (s[0], s[1], s[2]);
        let to = t / 2;
        let xv = self.value(x);
        let mut out = Vec::with_capacity(bs * c * to);
        let mut argmax = Vec::with_capacity(bs * c * to);
        for r in 0..bs * c {
            for j in 0..to {
                let i0 = r * t + 2 * j;
                let i = if xv[i0 + 1] > xv[i0] { i0 + 1 } else { i0 };
                out.push(xv[i]);
                argmax.push(i);
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, vec![bs, c, to], Op::MaxPool1d { x, argmax }, ng))
    }

    /// `[B, C, T]` to `[B, T, C]`.
    pub fn transpose12(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(shape_err(format!("transpose12 needs rank 3, got {s:?}")));
        }
        let (bs, c, t) = (s[0], s[1], s[2]);
        let xv = self.value(x);
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..bs {
            for ci in 0..c {
                for ti in 0..t {
                    out[(b * t + ti) * c + ci] = xv[(b * c + ci) * t + ti];
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, vec![bs, t, c], Op::Transpose12(x), ng))
    }

    /// Slice `[B, T, F]` at time `t`, giving `[B, F]`.
    pub fn time_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || t >= s[1] {
            return Err(shape_err(format!("time step {t} out of range for {s:?}")));
        }
        let (bs, tt, f) = (s[0], s[1], s[2]);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(bs * f);
        for b in 0..bs {
            out.extend_from_slice(&xv[(b * tt + t) * f..(b * tt + t + 1) * f]);
        }
        let ng = self.ng(x);
        Ok(self.push(out, vec![bs, f], Op::TimeStep { x, t }, ng))
    }

    /// Stack `T` tensors of shape `[B, F]` into `[B, T, F]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let first = *steps
            .first()
            .ok_or_else(|| shape_err("stack_time needs at least one step"))?;
        let s0 = self.shape(first).to_vec();
        if s0.len() != 2 || steps.iter().any(|&v| self.shape(v) != s0.as_slice()) {
            return Err(shape_err("stack_time: steps must share a [B, F] shape"));
        }
        let (bs, f, t) = (s0[0], s0[1], steps.len());
        let mut out = vec![T::zero(); bs * t * f];
        for (ti, &v) in steps.iter().enumerate() {
            let sv = self.value(v);
            for b in 0..bs {
                out[(b * t + ti) * f..(b * t + ti + 1) * f]
                    .copy_from_slice(&sv[b * f..(b + 1) * f]);
            }
        }
        let ng = steps.iter().any(|&v| self.ng(v));
        Ok(self.push(out, vec![bs, t, f], Op::StackTime(steps.to_vec()), ng))
    }

    /// Pick time index `idx[b]` for each batch item of `[B, T, F]`.
    pub fn gather_time(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || idx.len() != s[0] || idx.iter().any(|&i| i >= s[1]) {
            return Err(shape_err(format!(
                "gather_time: indices {idx:?} invalid for {s:?}"
            )));
        }
        let (bs, t, f) = (s[0], s[1], s[2]);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(bs * f);
        for (b, &i) in idx.iter().enumerate() {
            out.extend_from_slice(&xv[(b * t + i) * f..(b * t + i + 1) * f]);
        }
        let ng = self.ng(x);
        let op = Op::GatherTime {
            x,
            idx: idx.to_vec(),
        };
        Ok(self.push(out, vec![bs, f], op, ng))
    }

    fn check_lengths(&self, x: Var, lengths: &[usize], what: &str) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() != 3 || lengths.len() != s[0] || lengths.iter().any(|&l| l == 0 || l > s[2]) {
            return Err(shape_err(format!("{what}: lengths {lengths:?} invalid for {s:?}")));
        }
        Ok((s[0], s[1], s[2]))
    }

    /// Zero the time steps at or beyond each item's length in `[B, C, T]`.
    pub fn mask_time(&mut self, x: Var, lengths: &[usize]) -> Result<Var> {
        let (bs, c, t) = self.check_lengths(x, lengths, "mask_time")?;
        let mut out = self.value(x).to_vec();
        for b in 0..bs {
            for ci in 0..c {
                let base = (b * c + ci) * t;
                out[base + lengths[b]..base + t]
                    .iter_mut()
                    .for_each(|v| *v = T::zero());
            }
        }
        let ng = self.ng(x);
        let op = Op::MaskTime {
            x,
            lengths: lengths.to_vec(),
        };
        Ok(self.push(out, vec![bs, c, t], op, ng))
    }

    /// Mean over the first `lengths[b]` steps of `[B, C, T]`, giving `[B, C]`.
    pub fn mean_time(&mut self, x: Var, lengths: &[usize]) -> Result<Var> {
        let (bs, c, t) = self.check_lengths(x, lengths, "mean_time")?;
        let xv = self.value(x);
        let mut out = Vec::with_capacity(bs * c);
        for b in 0..bs {
            let n = T::from_usize(lengths[b]).expect("length fits");
            for ci in 0..c {
                let base = (b * c + ci) * t;
                let s: T = xv[base..base + lengths[b]].iter().copied().sum();
                out.push(s / n);
            }
        }
        let ng = self.ng(x);
        let op = Op::MeanTime {
            x,
            lengths: lengths.to_vec(),
        };
        Ok(self.push(out, vec![bs, c], op, ng))
    }

    /// Inverted dropout. `keep` supplies one uniform draw in `[0, 1)` per
    /// element; an element survives when its draw is at least `p`.
    pub fn dropout(&mut self, x: Var, p: f64, mut uniform: impl FnMut() -> f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let scale = T::lit(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if uniform() >= p { scale } else { T::zero() })
            .collect();
        let out = zip_map(self.value(x), &mask, |a, m| a * m);
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        Ok(self.push(out, shape, Op::Dropout { x, mask }, ng))
    }

    /// Training-mode batch normalization of `[B, F]` over the batch axis.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats<T>)> {
        let (bs, f) = self.check_bn(x, gamma, beta)?;
        let xv = self.value(x);
        let nb = T::from_usize(bs).expect("batch fits");
        let mut mean = vec![T::zero(); f];
        let mut var = vec![T::zero(); f];
        for r in 0..bs {
            for j in 0..f {
                mean[j] += xv[r * f + j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= nb);
        for r in 0..bs {
            for j in 0..f {
                let d = xv[r * f + j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= nb);
        let e = T::lit(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + e).sqrt()).collect();
        let mut xhat = vec![T::zero(); bs * f];
        for r in 0..bs {
            for j in 0..f {
                xhat[r * f + j] = (xv[r * f + j] - mean[j]) * inv_std[j];
            }
        }
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let out: Vec<T> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * gv[i % f] + bv[i % f])
            .collect();
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        let v = self.push(out, vec![bs, f], op, ng);
        Ok((v, BatchStats { mean, var, batch: bs }))
    }

    /// Eval-mode batch normalization: a fixed per-feature affine map using
    /// running statistics, with no coupling between batch items.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: f64,
    ) -> Result<Var> {
        let (bs, f) = self.check_bn(x, gamma, beta)?;
        if running_mean.len() != f || running_var.len() != f {
            return Err(shape_err("batchnorm running statistics have the wrong width"));
        }
        let e = T::lit(eps);
        let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + e).sqrt()).collect();
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let out: Vec<T> = xv
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let j = i % f;
                (v - running_mean[j]) * inv_std[j] * gv[j] + bv[j]
            })
            .collect();
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        let op = Op::FeatureAffine {
            x,
            gamma,
            beta,
            mean: running_mean.to_vec(),
            inv_std,
        };
        Ok(self.push(out, vec![bs, f], op, ng))
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize)> {
        let s = self.shape(x);
        if s.len() != 2 || self.shape(gamma) != [s[1]] || self.shape(beta) != [s[1]] {
            return Err(shape_err(format!(
                "batchnorm: input {s:?}, gamma {:?}, beta {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        Ok((s[0], s[1]))
    }

    /// Mean cross-entropy of `softmax(logits)` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
            return Err(shape_err(format!(
                "cross-entropy: logits {s:?} with {} targets",
                targets.len()
            )));
        }
        let (bs, k) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::Validation(format!(
                "target class {bad} out of range for {k} classes"
            )));
        }
        let probs = softmax_rows(self.value(logits), k);
        let lv = self.value(logits);
        let mut total = T::zero();
        for (r, &tg) in targets.iter().enumerate() {
            let row = &lv[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - m).exp()).sum::<T>().ln() + m;
            total += lse - row[tg];
        }
        let loss = total / T::from_usize(bs).expect("batch fits");
        let ng = self.ng(logits);
        let op = Op::SoftmaxCe {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(vec![loss], vec![1], op, ng))
    }

    fn check_regression(&self, pred: Var, target: &[T]) -> Result<()> {
        if self.value(pred).len() != target.len() || target.is_empty() {
            return Err(shape_err(format!(
                "regression loss: prediction {:?} with {} targets",
                self.shape(pred),
                target.len()
            )));
        }
        Ok(())
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        self.check_regression(pred, target)?;
        let n = T::from_usize(target.len()).expect("len fits");
        let loss = zip_map(self.value(pred), target, |p, t| (p - t).abs())
            .into_iter()
            .sum::<T>()
            / n;
        let ng = self.ng(pred);
        let op = Op::L1 {
            pred,
            target: target.to_vec(),
        };
        Ok(self.push(vec![loss], vec![1], op, ng))
    }

    /// Mean squared error.
    pub fn mse_loss(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        self.check_regression(pred, target)?;
        let n = T::from_usize(target.len()).expect("len fits");
        let loss = zip_map(self.value(pred), target, |p, t| (p - t) * (p - t))
            .into_iter()
            .sum::<T>()
            / n;
        let ng = self.ng(pred);
        let op = Op::Mse {
            pred,
            target: target.to_vec(),
        };
        Ok(self.push(vec![loss], vec![1], op, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let ng = self.ng(x);
        self.push(vec![s], vec![1], Op::Sum(x), ng)
    }

    /// `Σ w_i · x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        if terms.is_empty() || terms.iter().any(|&(v, _)| self.value(v).len() != 1) {
            return Err(shape_err("weighted_sum needs one or more scalar terms"));
        }
        let mut total = T::zero();
        for &(v, w) in terms {
            total += w * self.scalar(v);
        }
        let ng = terms.iter().any(|&(v, _)| self.ng(v));
        Ok(self.push(vec![total], vec![1], Op::WeightedSum(terms.to_vec()), ng))
    }

    /// Reverse sweep from a scalar. Parameter gradients are added (`+=`) into
    /// `store`, so running backward twice without zeroing doubles them.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Grads<T>> {
        if self.value(loss).len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            if let Op::Param(id) = node.op {
                store.get_mut(id).accumulate_grad(&g);
            }
            grads[i] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let br = &bv[kk * n..(kk + 1) * n];
                            ga[i * k + kk] += dot(gr, br);
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let a_ik = av[i * k + kk];
                            let row = &mut gb[kk * n..(kk + 1) * n];
                            row.iter_mut().zip(gr).for_each(|(o, &x)| *o += a_ik * x);
                        }
                    }
                });
            }
            Op::AddBias(x, b) => {
                let o = self.value(*b).len();
                acc(*x, &mut |gx| add_into(gx, g));
                acc(*b, &mut |gb| {
                    for (i, &v) in g.iter().enumerate() {
                        gb[i % o] += v;
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |gx| {
                gx.iter_mut().zip(g).for_each(|(o, &v)| *o += v * *c)
            }),
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for i in 0..g.len() {
                        if xv[i] > T::zero() {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (T::one() - y[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (T::one() - y[i] * y[i]);
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let n = self.shape(*x)[1];
                let (b, len) = (node.shape[0], node.shape[1]);
                acc(*x, &mut |gx| {
                    for r in 0..b {
                        add_into(
                            &mut gx[r * n + start..r * n + start + len],
                            &g[r * len..(r + 1) * len],
                        );
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |gx| add_into(gx, g)),
            Op::Conv1d { x, k, b } => {
                let (bs, cin, t) = (self.shape(*x)[0], self.shape(*x)[1], self.shape(*x)[2]);
                let (cout, w) = (self.shape(*k)[0], self.shape(*k)[2]);
                let pad = (w / 2) as isize;
                let (xv, kv) = (self.value(*x), self.value(*k));
                acc(*b, &mut |gb| {
                    for bi in 0..bs {
                        for o in 0..cout {
                            let row = &g[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                            gb[o] += row.iter().copied().sum::<T>();
                        }
                    }
                });
                acc(*k, &mut |gk| {
                    for bi in 0..bs {
                        for o in 0..cout {
                            let gr = &g[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                            for c in 0..cin {
                                let xr = &xv[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                                for j in 0..w {
                                    let off = j as isize - pad;
                                    let (lo, hi) = valid_range(t, off);
                                    let mut s = T::zero();
                                    for tt in lo..hi {
                                        s += gr[tt] * xr[(tt as isize + off) as usize];
                                    }
                                    gk[(o * cin + c) * w + j] += s;
                                }
                            }
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for bi in 0..bs {
                        for o in 0..cout {
                            let gr = &g[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                            for c in 0..cin {
                                let xr = &mut gx[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                                for j in 0..w {
                                    let kw = kv[(o * cin + c) * w + j];
                                    let off = j as isize - pad;
                                    let (lo, hi) = valid_range(t, off);
                                    for tt in lo..hi {
                                        xr[(tt as isize + off) as usize] += kw * gr[tt];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxPool1d { x, argmax } => acc(*x, &mut |gx| {
                for (o, &i) in argmax.iter().enumerate() {
                    gx[i] += g[o];
                }
            }),
            Op::Transpose12(x) => {
                let (bs, c, t) = (self.shape(*x)[0], self.shape(*x)[1], self.shape(*x)[2]);
                acc(*x, &mut |gx| {
                    for b in 0..bs {
                        for ci in 0..c {
                            for ti in 0..t {
                                gx[(b * c + ci) * t + ti] += g[(b * t + ti) * c + ci];
                            }
                        }
                    }
                });
            }
            Op::TimeStep { x, t } => {
                let (bs, tt, f) = (self.shape(*x)[0], self.shape(*x)[1], self.shape(*x)[2]);
                acc(*x, &mut |gx| {
                    for b in 0..bs {
                        add_into(
                            &mut gx[(b * tt + t) * f..(b * tt + t + 1) * f],
                            &g[b * f..(b + 1) * f],
                        );
                    }
                });
            }
            Op::StackTime(steps) => {
                let (bs, t, f) = (node.shape[0], node.shape[1], node.shape[2]);
                for (ti, &v) in steps.iter().enumerate() {
                    acc(v, &mut |gv| {
                        for b in 0..bs {
                            add_into(
                                &mut gv[b * f..(b + 1) * f],
                                &g[(b * t + ti) * f..(b * t + ti + 1) * f],
                            );
                        }
                    });
                }
            }
            Op::GatherTime { x, idx } => {
                let (t, f) = (self.shape(*x)[1], self.shape(*x)[2]);
                acc(*x, &mut |gx| {
                    for (b, &i) in idx.iter().enumerate() {
                        add_into(
                            &mut gx[(b * t + i) * f..(b * t + i + 1) * f],
                            &g[b * f..(b + 1) * f],
                        );
                    }
                });
            }
            Op::MaskTime { x, lengths } => {
                let (c, t) = (node.shape[1], node.shape[2]);
                acc(*x, &mut |gx| {
                    for (b, &len) in lengths.iter().enumerate() {
                        for ci in 0..c {
                            let base = (b * c + ci) * t;
                            add_into(&mut gx[base..base + len], &g[base..base + len]);
                        }
                    }
                });
            }
            Op::MeanTime { x, lengths } => {
                let (c, t) = (self.shape(*x)[1], self.shape(*x)[2]);
                acc(*x, &mut |gx| {
                    for (b, &len) in lengths.iter().enumerate() {
                        let n = T::from_usize(len).expect("length fits");
                        for ci in 0..c {
                            let gv = g[b * c + ci] / n;
                            let base = (b * c + ci) * t;
                            gx[base..base + len].iter_mut().for_each(|o| *o += gv);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &mut |gx| {
                for i in 0..g.len() {
                    gx[i] += g[i] * mask[i];
                }
            }),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (bs, f) = (node.shape[0], node.shape[1]);
                let gv = self.value(*gamma);
                let mut sum_g = vec![T::zero(); f];
                let mut sum_gx = vec![T::zero(); f];
                for r in 0..bs {
                    for j in 0..f {
                        sum_g[j] += g[r * f + j];
                        sum_gx[j] += g[r * f + j] * xhat[r * f + j];
                    }
                }
                acc(*beta, &mut |gb| add_into(gb, &sum_g));
                acc(*gamma, &mut |gg| add_into(gg, &sum_gx));
                let nb = T::from_usize(bs).expect("batch fits");
                acc(*x, &mut |gx| {
                    for r in 0..bs {
                        for j in 0..f {
                            let i = r * f + j;
                            let d = nb * g[i] - sum_g[j] - xhat[i] * sum_gx[j];
                            gx[i] += gv[j] * inv_std[j] * d / nb;
                        }
                    }
                });
            }
            Op::FeatureAffine {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let f = node.shape[1];
                let (xv, gv) = (self.value(*x), self.value(*gamma));
                acc(*beta, &mut |gb| {
                    for (i, &v) in g.iter().enumerate() {
                        gb[i % f] += v;
                    }
                });
                acc(*gamma, &mut |gg| {
                    for (i, &v) in g.iter().enumerate() {
                        let j = i % f;
                        gg[j] += v * (xv[i] - mean[j]) * inv_std[j];
                    }
                });
                acc(*x, &mut |gx| {
                    for (i, &v) in g.iter().enumerate() {
                        let j = i % f;
                        gx[i] += v * gv[j] * inv_std[j];
                    }
                });
            }
            Op::SoftmaxCe {
                logits,
                targets,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / T::from_usize(targets.len()).expect("batch fits");
                acc(*logits, &mut |gl| {
                    for (r, &tg) in targets.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == tg { T::one() } else { T::zero() };
                            gl[r * k + j] += scale * (probs[r * k + j] - onehot);
                        }
                    }
                });
            }
            Op::L1 { pred, target } => {
                let pv = self.value(*pred);
                let scale = g[0] / T::from_usize(target.len()).expect("len fits");
                acc(*pred, &mut |gp| {
                    for i in 0..target.len() {
                        let d = pv[i] - target[i];
                        let s = if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        gp[i] += scale * s;
                    }
                });
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred);
                let scale = T::lit(2.0) * g[0] / T::from_usize(target.len()).expect("len fits");
                acc(*pred, &mut |gp| {
                    for i in 0..target.len() {
                        gp[i] += scale * (pv[i] - target[i]);
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    acc(v, &mut |gv| gv[0] += w * g[0]);
                }
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(x: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - m).exp()));
        let s: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn matmul_raw<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let a_ik = a[i * k + kk];
            if a_ik == T::zero() {
                continue;
            }
            let br = &b[kk * n..(kk + 1) * n];
            row.iter_mut().zip(br).for_each(|(o, &x)| *o += a_ik * x);
        }
    }
    out
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Output positions `tt` for which `tt + off` indexes inside `0..t`.
fn valid_range(t: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (t as isize - off).clamp(0, t as isize) as usize;
    (lo.min(hi), hi)
}
