//! Stochastic gradient descent on `KL(q_phi || p)` for density targets.

use crate::error::{Error, Result};
use crate::numcore::vecops::{axpy, mean_and_se};
use crate::numcore::RngStream;
use crate::transform::{pushforward_logpdf, BaseDensity, InvertibleTransform};

use super::{draw_particles, kl_gradient_at, Target, TargetKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub step_size: f64,
    pub n_particles: usize,
    /// The step size is held for the first half of the run, then decays
    /// geometrically to `step_size * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub momentum: f64,
    /// Fixed base draws used for every KL-trace entry.
    pub kl_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            steps: 1000,
            step_size: 0.05,
            n_particles: 16,
            final_lr_fraction: 1.0,
            momentum: 0.0,
            kl_samples: 256,
        }
    }
}

impl FitConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        let half = self.steps / 2;
        if step < half || self.steps <= 1 {
            return self.step_size;
        }
        let frac = (step - half) as f64 / (self.steps - 1 - half).max(1) as f64;
        self.step_size * self.final_lr_fraction.powf(frac)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub transform: T,
    /// Parameters before the first step and after every step.
    pub params: Vec<Vec<f64>>,
    /// `E_q[log q - log p / alpha]` before the first step and after every
    /// step, up to the target's log-normalizer.
    pub kl: Vec<f64>,
    pub kl_se: Vec<f64>,
}

fn kl_estimate<T: InvertibleTransform>(t: &T, target: &Target, xis: &[Vec<f64>]) -> Result<(f64, f64)> {
    let TargetKind::Density(p) = &target.kind else {
        unreachable!("checked by fit_density")
    };
    let base = BaseDensity::standard_normal(t.dim());
    let terms = xis
        .iter()
        .map(|xi| {
            let theta = t.forward(xi, None)?;
            Ok(pushforward_logpdf(t, &base, &theta, None)? - p.log_prob(&theta)? / target.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_se(&terms))
}

/// Fits `t` to a density target by (momentum) SGD on the reparameterized
/// KL gradient.
pub fn fit_density<T: InvertibleTransform + Sync>(
    t: &T,
    target: &Target,
    cfg: &FitConfig,
    rng: &mut RngStream,
) -> Result<FitResult<T>> {
    if !matches!(target.kind, TargetKind::Density(_)) {
        return Err(Error::Invalid("fit_density needs a density target".into()));
    }
    if cfg.n_particles == 0 || cfg.kl_samples < 2 {
        return Err(Error::Invalid("fit_density needs particles and at least two KL samples".into()));
    }
    if !(cfg.step_size > 0.0) || !(0.0..1.0).contains(&cfg.momentum) || !(cfg.final_lr_fraction > 0.0) {
        return Err(Error::Invalid("fit_density step size, momentum or lr fraction out of range".into()));
    }
    let kl_xis = draw_particles(t.dim(), cfg.kl_samples, rng);
    let mut cur = t.with_params(&t.params())?;
    let mut params = cur.params().into_data();
    let mut velocity = vec![0.0; params.len()];
    let (kl0, se0) = kl_estimate(&cur, target, &kl_xis)?;
    let mut out = FitResult {
        transform: cur.with_params(&cur.params())?,
        params: vec![params.clone()],
        kl: vec![kl0],
        kl_se: vec![se0],
    };
    for step in 0..cfg.steps {
        let xis = draw_particles(t.dim(), cfg.n_particles, rng);
        let est = kl_gradient_at(&cur, target, &xis)?;
        for (v, g) in velocity.iter_mut().zip(est.grad_phi.data()) {
            *v = cfg.momentum * *v + g;
        }
        axpy(-cfg.lr_at(step), &velocity, &mut params);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                step,
                what: "non-finite transform parameters".into(),
            });
        }
        cur = cur.with_params(&cur.params().with_data(params.clone())?)?;
        let (kl, se) = kl_estimate(&cur, target, &kl_xis)?;
        out.params.push(params.clone());
        out.kl.push(kl);
        out.kl_se.push(se);
    }
    out.transform = cur;
    Ok(out)
}
