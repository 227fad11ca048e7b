//! Adam with bias correction.

use std::collections::HashMap;

use crate::params::{GradMap, Params};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
pub struct AdamState<S: Scalar> {
    step: u64,
    moments: HashMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Default for AdamState<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        Self { step: 0, moments: HashMap::new() }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn from_parts(step: u64, moments: HashMap<String, (Vec<S>, Vec<S>)>) -> Self {
        Self { step, moments }
    }

    pub(crate) fn moment(&self, name: &str) -> Option<&(Vec<S>, Vec<S>)> {
        self.moments.get(name)
    }
}

/// One optimizer step over every parameter. Parameters missing from `grads`
/// are treated as zero-gradient; their moments still decay.
pub fn adam_step<S: Scalar>(
    params: &mut Params<S>,
    grads: &GradMap<S>,
    state: &mut AdamState<S>,
    hyper: &AdamHyper,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = S::from_f64(hyper.beta1);
    let b2 = S::from_f64(hyper.beta2);
    let one = S::one();
    let corr1 = one - b1.powi(t);
    let corr2 = one - b2.powi(t);
    let lr = S::from_f64(hyper.lr);
    let eps = S::from_f64(hyper.eps);

    for (name, tensor) in params.iter_mut() {
        let n = tensor.numel();
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![S::zero(); n], vec![S::zero(); n]));
        let zero = S::zero();
        let grad = grads.get(name);
        let data = tensor.data_mut();
        for i in 0..n {
            let g = grad.map_or(zero, |g| g[i]);
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
