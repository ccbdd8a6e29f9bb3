//! Update rules. Both take a descent direction; callers doing ascent negate
//! the gradient first.

use serde::{Deserialize, Serialize};

use super::params::{sgd_apply, Parameters};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter moment estimates, flattened in tensor enumeration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }
}

/// Optimizer state for one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { config: AdamConfig, state: AdamState },
}

impl Optimizer {
    pub fn new<F: Scalar, P: Parameters<F>>(kind: OptimizerKind, params: &P) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                config: AdamConfig::default(),
                state: AdamState::new(params.num_params()),
            },
        }
    }

    /// Moves `params` against `grads`.
    pub fn apply<F: Scalar, P: Parameters<F>>(&mut self, params: &mut P, grads: &P, lr: F) {
        match self {
            Optimizer::Sgd => sgd_apply(params, grads, lr),
            Optimizer::Adam { config, state } => adam_apply(params, grads, lr, config, state),
        }
    }
}

/// Bias-corrected Adam step.
pub fn adam_apply<F: Scalar, P: Parameters<F>>(
    params: &mut P,
    grads: &P,
    lr: F,
    config: &AdamConfig,
    state: &mut AdamState,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let lr = lr.as_f64();
    let g = grads.flatten();
    let mut i = 0;
    for tensor in params.tensors_mut() {
        for p in tensor.iter_mut() {
            let gi = g[i].as_f64();
            let m = &mut state.m[i];
            let v = &mut state.v[i];
            *m = config.beta1 * *m + (1.0 - config.beta1) * gi;
            *v = config.beta2 * *v + (1.0 - config.beta2) * gi * gi;
            let step = lr * (*m / c1) / ((*v / c2).sqrt() + config.eps);
            *p -= F::of(step);
            i += 1;
        }
    }
}
