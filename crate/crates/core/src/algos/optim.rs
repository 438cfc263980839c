//! First-order optimizers for `phi`. All of them descend the given gradient.

use crate::error::{Error, Result};
use crate::numcore::vecops::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain SGD, with optional heavy-ball momentum.
    Sgd,
    /// Adam with `beta1 = momentum`.
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub momentum: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescales gradients whose norm exceeds this bound.
    pub clip_norm: Option<f64>,
    /// Training iteration `k` (from 0) uses `step_size * lr_decay^k`.
    pub lr_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            step_size: 0.01,
            momentum: 0.0,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            lr_decay: 1.0,
        }
    }
}

impl OptimizerConfig {
    /// The config with its step size decayed to iteration `k`.
    pub fn at_iteration(&self, k: usize) -> OptimizerConfig {
        OptimizerConfig {
            step_size: self.step_size * self.lr_decay.powf(k as f64),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Invalid(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Invalid("adam beta2 must lie in [0, 1) and eps be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Invalid(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Invalid(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        OptimizerState {
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn descend(&mut self, cfg: &OptimizerConfig, params: &mut [f64], grad: &[f64]) {
        let scale = match cfg.clip_norm {
            Some(c) => {
                let n = norm(grad);
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.steps += 1;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.first).zip(grad) {
                    *v = cfg.momentum * *v + scale * g;
                    *p -= cfg.step_size * *v;
                }
            }
            OptimizerKind::Adam => {
                let t = i32::try_from(self.steps).unwrap_or(i32::MAX);
                let c1 = 1.0 - cfg.momentum.powi(t);
                let c2 = 1.0 - cfg.beta2.powi(t);
                for (((p, m), v), g) in params.iter_mut().zip(&mut self.first).zip(&mut self.second).zip(grad) {
                    let g = scale * g;
                    *m = cfg.momentum * *m + (1.0 - cfg.momentum) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    *p -= cfg.step_size * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
                }
            }
        }
    }
}
