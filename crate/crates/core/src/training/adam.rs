//! Adam with bias correction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::network::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Number of completed updates.
    pub t: u64,
    pub m: HashMap<String, Vec<f32>>,
    pub v: HashMap<String, Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }
}

/// One update of every trainable parameter, then all gradient slots are cleared.
///
/// `θ ← θ − lr · m̂ / (√v̂ + ε)`
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, p) in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; p.value.len()]);
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; p.value.len()]);
        let grads = p.grad.data();
        for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
            let g = f64::from(grads[i]);
            let mi = beta1 * f64::from(m[i]) + (1.0 - beta1) * g;
            let vi = beta2 * f64::from(v[i]) + (1.0 - beta2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *theta = (f64::from(*theta) - lr * m_hat / (v_hat.sqrt() + epsilon)) as f32;
        }
    }
    params.zero_grads();
}
