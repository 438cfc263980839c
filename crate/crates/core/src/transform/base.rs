use std::f64::consts::PI;

use crate::error::{ensure_len, Result};
use crate::numcore::RngStream;

/// Standard normal base density `N(0, I)` of dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseDensity {
    dim: usize,
}

impl BaseDensity {
    pub fn standard_normal(dim: usize) -> Self {
        assert!(dim > 0, "base density dimension must be positive");
        BaseDensity { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        ensure_len("base density sample", self.dim, x.len())?;
        let sq: f64 = x.iter().map(|v| v * v).sum();
        Ok(-0.5 * sq - 0.5 * self.dim as f64 * (2.0 * PI).ln())
    }

    /// Gradient of the log-density, `-x`.
    pub fn grad_log_prob(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| -v).collect()
    }

    /// Differential entropy `d/2 * ln(2 pi e)`.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim as f64 * (2.0 * PI * std::f64::consts::E).ln()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        rng.normal_vec(self.dim)
    }
}
