//! AdamW with decoupled weight decay, plus the cosine learning-rate schedule.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// AdamW optimizer state. Moment buffers are keyed by parameter name and
/// created lazily with the parameter's shape.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW { config, step: 0, moments: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Override the learning rate for subsequent steps (schedules call this).
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Apply one update. `params` and `grads` pair by position; the whole
    /// step is rejected (state untouched) if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &[Tensor]) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape != g.shape {
                return Err(Error::ShapeMismatch { op: "adamw_step", lhs: p.shape.clone(), rhs: g.shape.clone() });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        for ((name, p), g) in params.iter_mut().zip(grads) {
            let mom = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| Moments { m: vec![0.0; p.numel()], v: vec![0.0; p.numel()] });
            for i in 0..p.data.len() {
                let gi = g.data[i];
                mom.m[i] = c.beta1 * mom.m[i] + (1.0 - c.beta1) * gi;
                mom.v[i] = c.beta2 * mom.v[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                // Decoupled decay: applied to the parameter, not the gradient.
                p.data[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * p.data[i]);
            }
        }
        Ok(())
    }
}

/// Cosine decay from `lr_max` at step 0 to `lr_min` at `total_steps`.
/// Steps past the end clamp to `lr_min`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> f64 {
    if step >= total_steps {
        return if total_steps == 0 && step == 0 { lr_max } else { lr_min };
    }
    let ratio = step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * ratio).cos())
}
