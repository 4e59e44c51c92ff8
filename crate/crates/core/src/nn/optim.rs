//! Adam with global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm above which gradients are rescaled; `<= 0` disables.
    pub clip_norm: f64,
    /// Cosine decay from `lr` to `lr * final_lr_fraction` over this many
    /// steps; 0 keeps the rate constant.
    #[serde(default)]
    pub decay_steps: u64,
    #[serde(default = "one")]
    pub final_lr_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl AdamConfig {
    pub fn rate_at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 {
            return self.lr;
        }
        let x = (step as f64 / self.decay_steps as f64).min(1.0);
        let f = self.final_lr_fraction;
        self.lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * x).cos()))
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: 1.0, decay_steps: 0, final_lr_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Scales `grads` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self { config, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// One update. Entries whose `trainable` flag is false are left alone.
    /// Returns the pre-clip gradient norm.
    pub fn update(&mut self, params: &mut [f64], grads: &mut [f64], trainable: &[bool], iter: usize) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != params.len() || trainable.len() != params.len() {
            return Err(Error::Training { iter, detail: "optimizer buffers do not match parameters".into() });
        }
        for (g, &t) in grads.iter_mut().zip(trainable) {
            if !t {
                *g = 0.0;
            }
        }
        let norm = clip_grad_norm(grads, self.config.clip_norm);
        if !norm.is_finite() {
            return Err(Error::Training { iter, detail: format!("non-finite gradient norm {norm}") });
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = c.rate_at(self.step - 1);
        for i in 0..params.len() {
            if !trainable[i] {
                continue;
            }
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + c.eps);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training { iter, detail: "parameters became non-finite".into() });
        }
        Ok(norm)
    }
}
