use serde::{Deserialize, Serialize};

use super::scalar::Real;
use super::tensor::Tensor;

/// `param ← param − lr · grad`.
pub fn sgd_step<T: Real>(param: &mut [T], grad: &[T], lr: T) {
    assert_eq!(param.len(), grad.len(), "sgd_step: shape mismatch");
    for (p, &g) in param.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// First/second moment estimates and step count of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step<T: Real>(
    param: &mut [T],
    state: &mut AdamState<T>,
    grad: &[T],
    lr: f64,
    hyper: AdamHyper,
) {
    assert_eq!(param.len(), grad.len(), "adam_step: shape mismatch");
    assert_eq!(
        param.len(),
        state.m.len(),
        "adam_step: state shape mismatch"
    );
    state.t += 1;
    let (b1, b2) = (T::lit(hyper.beta1), T::lit(hyper.beta2));
    let c1 = 1.0 - hyper.beta1.powi(state.t as i32);
    let c2 = 1.0 - hyper.beta2.powi(state.t as i32);
    let step = T::lit(lr / c1);
    let inv_c2 = T::lit(1.0 / c2);
    let eps = T::lit(hyper.eps);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        param[i] -= step * state.m[i] / ((state.v[i] * inv_c2).sqrt() + eps);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Applies one optimizer over an ordered list of parameter tensors, using
/// each tensor's gradient buffer.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub adam: AdamHyper,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            adam: AdamHyper::default(),
            states: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) {
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = T::lit(self.lr);
                for p in params.iter_mut() {
                    let (v, g) = p.value_and_grad_mut();
                    sgd_step(v, g, lr);
                }
            }
            OptimizerKind::Adam => {
                if self.states.is_empty() {
                    self.states = params.iter().map(|p| AdamState::new(p.len())).collect();
                }
                assert_eq!(self.states.len(), params.len(), "parameter list changed");
                for (p, s) in params.iter_mut().zip(&mut self.states) {
                    let (v, g) = p.value_and_grad_mut();
                    adam_step(v, s, g, self.lr, self.adam);
                }
            }
        }
    }
}
