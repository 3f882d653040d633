//! Adam with bias correction, for [`Mlp`] parameters and for bare
//! parameter vectors (the policy's state-independent log-std).

use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_lr(1e-3)
    }
}

/// Moment accumulators matching an [`Mlp`]'s parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. A non-finite gradient is reported and the step is
/// skipped with the network and moments untouched.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("adam gradient".into()));
    }
    if grads.weights.len() != net.weights_ref().len() {
        return Err(Error::Dimension("gradient/parameter layer mismatch".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let cfg = state.cfg;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..params.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    };

    for l in 0..grads.weights.len() {
        let g = &grads.weights[l];
        if g.len() != net.weights_ref()[l].len() {
            return Err(Error::Dimension("gradient/parameter shape mismatch".into()));
        }
    }
    for l in 0..grads.weights.len() {
        let (gw, gb) = (&grads.weights[l], &grads.biases[l]);
        update(
            &mut net.weights_mut()[l],
            gw,
            &mut state.m.weights[l],
            &mut state.v.weights[l],
        );
        update(
            &mut net.biases_mut()[l],
            gb,
            &mut state.m.biases[l],
            &mut state.v.biases[l],
        );
    }
    Ok(())
}

/// Adam over a bare `Vec<f64>` parameter.
#[derive(Debug, Clone)]
pub struct AdamVec {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamVec {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        AdamVec {
            cfg,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient".into()));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension("adam vector shape mismatch".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.cfg.beta1 * self.m[i] + (1.0 - self.cfg.beta1) * grads[i];
            self.v[i] = self.cfg.beta2 * self.v[i] + (1.0 - self.cfg.beta2) * grads[i] * grads[i];
            params[i] -= self.cfg.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.cfg.eps);
        }
        Ok(())
    }
}
