//! First-order optimizers over [`Parameters`] models.
//!
//! Updates always descend: callers maximizing an objective accumulate the
//! negated gradient.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_adam_eps() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Gradients are rescaled to this global L2 norm when it is exceeded.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, lr, max_grad_norm: None }
    }

    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::adam(), lr, max_grad_norm: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if let Some(m) = self.max_grad_norm {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::invalid(format!("max_grad_norm must be positive, got {m}")));
            }
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.kind {
            let unit = |b: f64| (0.0..1.0).contains(&b);
            if !unit(beta1) || !unit(beta2) || !(eps > 0.0) {
                return Err(Error::invalid("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Optimizer with its moment estimates, keyed by parameter name so the
/// state survives a checkpoint round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    step: u64,
    #[serde(default)]
    first_moment: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    second_moment: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, step: 0, first_moment: BTreeMap::new(), second_moment: BTreeMap::new() })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients and returns the
    /// gradient norm measured before clipping. Gradients are left in place.
    pub fn step<M: Parameters + ?Sized>(&mut self, model: &mut M) -> f64 {
        let norm = model.grad_norm();
        let scale = match self.config.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.step += 1;
        let lr = self.config.lr;
        match self.config.kind {
            OptimizerKind::Sgd => model.visit_mut("", &mut |_, p| {
                for (v, g) in p.values.iter_mut().zip(&p.grad) {
                    *v -= lr * scale * g;
                }
            }),
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (ms, vs) = (&mut self.first_moment, &mut self.second_moment);
                model.visit_mut("", &mut |name, p| {
                    let m = ms.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
                    let v = vs.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
                    for k in 0..p.len() {
                        let g = p.grad[k] * scale;
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                        p.values[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                });
            }
        }
        norm
    }
}
