//! AdamW with decoupled weight decay over policy tensors.

use serde::{Deserialize, Serialize};

use crate::policy::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Weights,
    v: Weights,
    step: i32,
}

impl AdamW {
    pub fn new(config: AdamWConfig, like: &Weights) -> AdamW {
        AdamW {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update. `mask[t]` false leaves tensor `t` untouched, moments included.
    pub fn step_masked(&mut self, params: &mut Weights, grads: &Weights, mask: [bool; 8]) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        for ((((p, g), m), v), on) in ps.into_iter().zip(gs).zip(ms).zip(vs).zip(mask) {
            if !on {
                continue;
            }
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                if gi == 0.0 && m[i] == 0.0 && c.weight_decay == 0.0 {
                    continue;
                }
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.epsilon);
                p[i] -= c.learning_rate * (update + c.weight_decay * p[i]);
            }
        }
    }

    pub fn step(&mut self, params: &mut Weights, grads: &Weights) {
        self.step_masked(params, grads, [true; 8]);
    }
}
