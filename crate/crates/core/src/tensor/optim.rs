use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const DECAY_RATE: f64 = 0.99;
pub const DECAY_EVERY: u64 = 1000;

/// Step-decayed learning rate: `base_lr * 0.99^floor(step / 1000)`.
pub fn lr_schedule(base_lr: f64, step: u64) -> f64 {
    base_lr * DECAY_RATE.powi((step / DECAY_EVERY) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are allocated on the first step and
/// keyed by parameter position, so the parameter list order must stay fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Rebuilds an optimizer from checkpointed moments.
    pub fn from_parts(config: AdamConfig, t: u64, first: Vec<Vec<f32>>, second: Vec<Vec<f32>>) -> Result<Self> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(m, v)| m.len() != v.len()) {
            return Err(Error::contract("adam", "first and second moments disagree in layout"));
        }
        Ok(Adam {
            config,
            t,
            first,
            second,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.second
    }

    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.first.is_empty() && !params.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || params.iter().zip(&self.first).any(|(p, m)| p.numel() != m.len())
        {
            return Err(Error::contract("adam", "optimizer state does not match the parameter list"));
        }
        if params.iter().any(|p| p.grad().is_none()) {
            return Err(Error::contract("adam", "parameter has no gradient; run backward first"));
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let correct1 = 1.0 - beta1.powi(self.t as i32);
        let correct2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad().expect("checked above").to_vec();
            for (((x, g), mi), vi) in p.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g as f64;
                let m_new = beta1 * *mi as f64 + (1.0 - beta1) * g;
                let v_new = beta2 * *vi as f64 + (1.0 - beta2) * g * g;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let update = lr * (m_new / correct1) / ((v_new / correct2).sqrt() + eps);
                *x = (*x as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
