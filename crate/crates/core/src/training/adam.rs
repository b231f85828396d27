use serde::{Deserialize, Serialize};

use crate::autodiff::DenseArray;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} = {b} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// First and second moments per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    names: Vec<String>,
    m: Vec<DenseArray>,
    v: Vec<DenseArray>,
    t: u64,
}

impl AdamState {
    pub fn new(blocks: &[(String, &DenseArray)]) -> Self {
        AdamState {
            names: blocks.iter().map(|(n, _)| n.clone()).collect(),
            m: blocks.iter().map(|(_, b)| DenseArray::zeros(b.shape())).collect(),
            v: blocks.iter().map(|(_, b)| DenseArray::zeros(b.shape())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update at learning rate `lr`. Gradients are
/// checked before anything is modified.
pub fn adam_step(
    params: &mut [&mut DenseArray],
    grads: &[DenseArray],
    state: &mut AdamState,
    config: &AdamConfig,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::contract(format!(
            "{} parameter blocks, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (b, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[b].shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::numeric(format!("non-finite gradient in block {}", state.names[b])));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[b].data_mut();
        let v = state.v[b].data_mut();
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
