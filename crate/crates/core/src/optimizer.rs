//! Adam with bias correction, and inverse-time learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

/// First/second moment buffers, one per parameter tensor, and the update count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Parameter(format!(
                "invalid Adam constants beta1={beta1} beta2={beta2} epsilon={epsilon}"
            )));
        }
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(Self {
            config,
            v: m.clone(),
            m,
            t: 0,
        })
    }
}

/// One Adam update in place:
///
/// ```text
/// m ← β1 m + (1-β1) g          v ← β2 v + (1-β2) g²
/// m̂ = m / (1-β1^t)             v̂ = v / (1-β2^t)
/// θ ← θ - lr · m̂ / (√v̂ + ε)
/// ```
///
/// `t` counts from 1 at the first update. Gradients are validated before any state changes.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len(), state.m.len()],
        });
    }
    for (k, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter tensor {k}")));
        }
    }
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// `η_t = η_0 / (1 + decay · t)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-3,
            decay: 0.0,
        }
    }
}

impl LrSchedule {
    pub fn new(initial: f64, decay: f64) -> Result<Self> {
        if !initial.is_finite() || !decay.is_finite() || initial <= 0.0 || decay < 0.0 {
            return Err(Error::Parameter(format!(
                "learning rate must be positive and decay non-negative (got {initial}, {decay})"
            )));
        }
        Ok(Self { initial, decay })
    }

    pub fn lr_at(&self, t: i64) -> Result<f64> {
        if t < 0 {
            return Err(Error::Parameter(format!("schedule step must be >= 0, got {t}")));
        }
        Ok(self.initial / (1.0 + self.decay * t as f64))
    }
}
