use super::tensor::{ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates. Parameters without a stored
/// gradient are treated as having a zero gradient.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            let grad = p.grad().map(|g| g.to_vec());
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let data = p.data_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g[i]);
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(x));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = scalar_store(1.5);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..5 {
            adam.step(&mut store);
        }
        assert_eq!(store.iter().next().unwrap().1.data(), &[1.5]);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut store = scalar_store(0.0);
        let id = store.ids().next().unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..50 {
            store.zero_grad();
            store.get_mut(id).accumulate_grad(&[-2.0]);
            adam.step(&mut store);
        }
        assert!(store.get(id).data()[0] > 0.0);
    }
}
