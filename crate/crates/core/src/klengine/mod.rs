//! Stochastic gradients of `KL(q_phi || p)` through an invertible transform.
//!
//! With `theta = h_phi(xi)`, `xi ~ N(0, I)`:
//!
//! ```text
//! dKL/dphi = -E[ grad log p(theta) . dtheta/dphi + d/dphi log det(dh/dxi) ]
//! ```
//!
//! Every gradient in this module is `dKL/dphi`; optimizers descend it.
//! Targets are tempered, `p_alpha(theta) ∝ p(theta)^(1/alpha)`; for
//! reinforcement learning `log p(theta) = R(theta)` so that
//! `grad log p_alpha = (1/alpha) dR/dtheta`.

mod density;
mod fit;
mod rl;

pub use density::{quadrature_kl_1d, simpson, DiagGaussian, FnDensity, GaussianMixture, LogDensity};
pub use fit::{fit_density, FitConfig, FitResult};
pub use rl::{
    assign_advantages, collect_particles, rl_kl_gradient, rl_kl_gradient_with, rl_objective_with, theta_at,
    Particle, RlTarget, StepTerm, StepView,
};

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{ensure_len, Error, Result};
use crate::numcore::vecops::{mean_and_se, mean_and_se_vec};
use crate::numcore::{RngStream, ShapedParams};
use crate::transform::{AffineTransform, BaseDensity, InvertibleTransform};

#[derive(Clone)]
pub enum TargetKind {
    Density(Arc<dyn LogDensity>),
    Rl(Box<RlTarget>),
}

/// The distribution `q_phi` is fitted to, with its temperature.
#[derive(Clone)]
pub struct Target {
    pub kind: TargetKind,
    pub alpha: f64,
}

impl Target {
    pub fn density(d: impl LogDensity + 'static, alpha: f64) -> Result<Self> {
        Target::from_arc(Arc::new(d), alpha)
    }

    pub fn from_arc(d: Arc<dyn LogDensity>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Target {
            kind: TargetKind::Density(d),
            alpha,
        })
    }

    pub fn rl(t: RlTarget, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Target {
            kind: TargetKind::Rl(Box::new(t)),
            alpha,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("temperature must be positive, got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    Constant,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    pub alpha0: f64,
    pub decay: f64,
    pub floor: f64,
    pub mode: ScheduleMode,
}

impl TemperatureSchedule {
    pub fn constant(alpha: f64) -> Self {
        TemperatureSchedule {
            alpha0: alpha,
            decay: 1.0,
            floor: alpha,
            mode: ScheduleMode::Constant,
        }
    }

    pub fn geometric(alpha0: f64, decay: f64, floor: f64) -> Self {
        TemperatureSchedule {
            alpha0,
            decay,
            floor,
            mode: ScheduleMode::Geometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha0)?;
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Invalid(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::Invalid(format!("temperature floor must be positive, got {}", self.floor)));
        }
        Ok(())
    }
}

/// `max(floor, alpha0 * decay^step)` (geometric) or `alpha0` (constant).
pub fn alpha_at(sched: &TemperatureSchedule, step: usize) -> f64 {
    match sched.mode {
        ScheduleMode::Constant => sched.alpha0,
        ScheduleMode::Geometric => {
            let e = i32::try_from(step).unwrap_or(i32::MAX);
            (sched.alpha0 * sched.decay.powi(e)).max(sched.floor)
        }
    }
}

/// Monte-Carlo estimate of `dKL/dphi` with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct KlGradEstimate {
    pub grad_phi: ShapedParams,
    /// Coordinate-wise standard error across particles.
    pub std_error: Vec<f64>,
    pub mean_log_det: f64,
    /// Mean untempered target log-density, or mean return for RL targets.
    pub mean_target: f64,
    pub particles: usize,
}

/// Per-particle contribution: `(grad, log det, target value)`.
pub(crate) type ParticleTerm = (Vec<f64>, f64, f64);

pub(crate) fn reduce_particles(template: &ShapedParams, terms: Vec<ParticleTerm>) -> Result<KlGradEstimate> {
    if terms.is_empty() {
        return Err(Error::Empty("particle set".into()));
    }
    let n = template.len();
    let grads: Vec<Vec<f64>> = terms.iter().map(|t| t.0.clone()).collect();
    let (mean, se) = mean_and_se_vec(&grads, n);
    let log_dets: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let values: Vec<f64> = terms.iter().map(|t| t.2).collect();
    Ok(KlGradEstimate {
        grad_phi: template.with_data(mean)?,
        std_error: se,
        mean_log_det: mean_and_se(&log_dets).0,
        mean_target: mean_and_se(&values).0,
        particles: terms.len(),
    })
}

/// One particle's term `-(grad log p_alpha(h(xi)) . dh/dphi + d log det / dphi)`.
fn density_particle<T: InvertibleTransform + Sync>(
    t: &T,
    density: &dyn LogDensity,
    alpha: f64,
    xi: &[f64],
    index: usize,
) -> Result<ParticleTerm> {
    let theta = t.forward(xi, None)?;
    let g = density.grad_log_prob(&theta)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("target gradient at particle {index}")));
    }
    let value = density.log_prob(&theta)?;
    let upstream: Vec<f64> = g.iter().map(|v| v / alpha).collect();
    let mut grad = t.forward_vjp(xi, None, &upstream)?;
    let ld = t.log_det_grad(None)?;
    for (a, b) in grad.iter_mut().zip(&ld) {
        *a = -(*a + b);
    }
    Ok((grad, t.log_det_jacobian(xi, None)?, value))
}

/// `dKL/dphi` on an explicit batch of base draws (density targets only).
pub fn kl_gradient_at<T: InvertibleTransform + Sync>(t: &T, target: &Target, xis: &[Vec<f64>]) -> Result<KlGradEstimate> {
    let TargetKind::Density(density) = &target.kind else {
        return Err(Error::Invalid("explicit base draws need a density target".into()));
    };
    if t.state_dim().is_some() {
        return Err(Error::Invalid("density targets need an unconditioned transform".into()));
    }
    ensure_len("target dimension", t.dim(), density.dim())?;
    let terms = xis
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            ensure_len("base draw", t.dim(), xi.len())?;
            density_particle(t, density.as_ref(), target.alpha, xi, i)
        })
        .collect::<Result<Vec<_>>>()?;
    reduce_particles(&t.params(), terms)
}

/// Independent base draws, one child stream per particle.
pub fn draw_particles(dim: usize, n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let tag = rng.next_u64();
    let parent = rng.child(tag);
    let base = BaseDensity::standard_normal(dim);
    (0..n as u64).map(|i| base.sample(&mut parent.child(i))).collect()
}

/// Monte-Carlo `dKL/dphi` with `n_particles` fresh base draws.
///
/// RL targets collect `rollouts_per_particle` episodes for each draw and use
/// the REINFORCE form of `dR/dtheta`.
pub fn kl_gradient<T>(t: &T, target: &Target, n_particles: usize, rng: &mut RngStream) -> Result<KlGradEstimate>
where
    T: InvertibleTransform + Sync + Clone + Into<crate::transform::Transform>,
{
    if n_particles == 0 {
        return Err(Error::Empty("kl_gradient needs at least one particle".into()));
    }
    match &target.kind {
        TargetKind::Density(_) => {
            let xis = draw_particles(t.dim(), n_particles, rng);
            kl_gradient_at(t, target, &xis)
        }
        TargetKind::Rl(rl) => {
            let tr: crate::transform::Transform = t.clone().into();
            let tag = rng.next_u64();
    let parent = rng.child(tag);
            let mut parts = collect_particles(&tr, &rl.model, &rl.env, n_particles, rl.rollouts_per_particle, &parent)?;
            assign_advantages(&mut parts, &rl.baseline, &rl.advantage)?;
            rl_kl_gradient(&tr, &rl.model, &parts, target.alpha)
        }
    }
}

/// Closed-form gradient for a mean-field affine transform from a single draw.
/// Returns the ascent directions `(-dKL/dmu, -dKL/dsigma)` with
///
/// ```text
/// -dKL/dmu_i    = (1/alpha) dR/dtheta_i
/// -dKL/dsigma_i = (1/alpha) xi_i dR/dtheta_i + 1/sigma_i
/// ```
pub fn meanfield_kl_gradient(
    t: &AffineTransform,
    dr_dtheta: &[f64],
    xi: &[f64],
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_len("dR/dtheta", t.dim(), dr_dtheta.len())?;
    ensure_len("base draw", t.dim(), xi.len())?;
    check_alpha(alpha)?;
    let mu: Vec<f64> = dr_dtheta.iter().map(|g| g / alpha).collect();
    let sigma = t
        .sigma()
        .iter()
        .zip(dr_dtheta)
        .zip(xi)
        .map(|((s, g), x)| x * g / alpha + 1.0 / s)
        .collect();
    Ok((mu, sigma))
}
