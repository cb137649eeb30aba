//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, params: &[&Tensor]) -> Self {
        let m: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, step: 0, v: m.clone(), m }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Zeroes both moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.m.iter_mut().chain(self.v.iter_mut()).for_each(|t| t.scale(0.0));
    }

    /// One update. `names` label parameters in error messages.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], names: &[&str]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return shape_err(
                "adamw",
                format!("{} params, {} grads, {} moment slots", params.len(), grads.len(), self.m.len()),
            );
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.expect_shape("adamw", self.m[i].shape())?;
            g.expect_shape("adamw", self.m[i].shape())?;
            if !g.is_finite() {
                let name = names.get(i).copied().unwrap_or("?");
                return Err(Error::NonFinite { what: format!("gradient of {name}"), step: self.step as usize });
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *pv -= c.lr * c.weight_decay * *pv;
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                *pv -= c.lr * (*mv / bc1) / ((*vv / bc2).sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
