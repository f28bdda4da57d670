//! Adam with bias correction.

use alloc::vec::Vec;

use crate::graph::{ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        AdamState {
            m: params.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }

    pub fn moment_m(&self, id: ParamId) -> &Tensor {
        &self.m[id.index()]
    }

    pub fn moment_v(&self, id: ParamId) -> &Tensor {
        &self.v[id.index()]
    }

    pub fn moments_mut(&mut self, id: ParamId) -> (&mut Tensor, &mut Tensor) {
        (&mut self.m[id.index()], &mut self.v[id.index()])
    }
}

/// One Adam update from the gradients currently stored in `params`.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    for id in params.ids().collect::<Vec<_>>() {
        let grad = params.grad(id).clone();
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let value = params.value_mut(id).data_mut();
        for i in 0..value.len() {
            let g = grad.data()[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= state.lr * m_hat / (libm::sqrt(v_hat) + state.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut params = ParamSet::new();
        let w = params.register("w", Tensor::scalar(1.0)).unwrap();
        let mut state = AdamState::new(&params, 1e-3);
        // Plant a gradient directly.
        let mut g = crate::graph::Graph::new();
        let wn = g.param(&params, w);
        let c = g.constant(Tensor::scalar(3.0));
        let prod = g.mul(wn, c).unwrap();
        g.backward(prod).unwrap();
        g.accumulate_grads_into(&mut params, 1.0);
        adam_step(&mut params, &mut state);
        let delta = params.value(w).item() - 1.0;
        // Bias-corrected first step: -lr * g / (|g| + eps') which is about -lr.
        assert!((delta + 1e-3).abs() < 1e-8, "delta {delta}");
    }

    #[test]
    fn zero_grad_no_change() {
        let mut params = ParamSet::new();
        let w = params.register("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5].to_vec()).unwrap()).unwrap();
        let before = params.value(w).clone();
        let mut state = AdamState::new(&params, 1e-3);
        adam_step(&mut params, &mut state);
        assert_eq!(params.value(w), &before);
    }

    /// Scalar simulation oracle: minimizing theta^2 shrinks |theta| on every
    /// one of the first 10 steps.
    #[test]
    fn quadratic_descent_shrinks_every_step() {
        let mut params = ParamSet::new();
        let w = params.register("theta", Tensor::scalar(1.0)).unwrap();
        let mut state = AdamState::new(&params, 0.1);
        let mut prev = 1.0f64;
        for _ in 0..10 {
            params.zero_grads();
            let mut g = crate::graph::Graph::new();
            let wn = g.param(&params, w);
            let sq = g.mul(wn, wn).unwrap();
            g.backward(sq).unwrap();
            g.accumulate_grads_into(&mut params, 1.0);
            adam_step(&mut params, &mut state);
            let cur = params.value(w).item().abs();
            assert!(cur < prev, "|theta| grew: {cur} >= {prev}");
            prev = cur;
        }
    }
}
