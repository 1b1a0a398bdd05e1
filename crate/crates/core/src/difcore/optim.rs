use serde::{Deserialize, Serialize};

use super::tensor::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// First/second moment estimates for the parameters an optimizer owns.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl AdamState {
    /// State for exactly the parameters named in `owned`.
    pub fn new(owned: &ParamSet) -> Self {
        AdamState {
            m: owned.zeros_like(),
            v: owned.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam update of every parameter tracked by `state`.
///
/// Parameters not tracked by `state` are left untouched.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {}", cfg.lr)));
    }
    for (name, m) in state.m.iter() {
        let p = params.get(name)?;
        let g = grads.get(name)?;
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!(
                "adam: shapes for {name:?}: param {:?}, grad {:?}, state {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let names: Vec<String> = state.m.names().cloned().collect();
    for name in names {
        let g = grads.get(&name)?.data().to_vec();
        let m = state.m.get_mut(&name).expect("tracked").data_mut();
        for (mi, gi) in m.iter_mut().zip(&g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let m = m.to_vec();
        let v = state.v.get_mut(&name).expect("tracked").data_mut();
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let p = params.get_mut(&name).expect("checked above").data_mut();
        for ((pi, mi), vi) in p.iter_mut().zip(&m).zip(v.iter()) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *pi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
