use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::Scalar;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    /// Number of completed steps.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return shape_err(format!(
            "adam: params {} / grads {} / state {}",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    state.t += 1;
    let c = state.config;
    let b1 = T::of(c.beta1);
    let b2 = T::of(c.beta2);
    let one = T::one();
    let step = state.t.min(i32::MAX as u64) as i32;
    let bc1 = T::of(1.0 - c.beta1.powi(step));
    let bc2 = T::of(1.0 - c.beta2.powi(step));
    let lr = T::of(c.lr);
    let eps = T::of(c.eps);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
