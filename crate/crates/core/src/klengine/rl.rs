//! The reinforcement-learning instantiation: `log p(theta) = R(theta)`, so
//!
//! ```text
//! dKL/dphi = -E_xi[ (1/alpha) dR/dtheta . dtheta/dphi + d/dphi log det ]
//! ```
//!
//! Each particle `xi` drives one or more episodes. With a state-conditioned
//! transform the parameter is re-evaluated at every visited state,
//! `theta_t = h_phi(xi; s_t)`, so `dR/dtheta` arrives as one gradient per
//! step and is pulled back to `phi` step by step. The log-determinant (and the
//! auxiliary-policy prior) are averaged over the particle's visited states.

use rayon::prelude::*;

use crate::envs::{rollout, EnvSpec, Trajectory};
use crate::error::{ensure_len, Error, Result};
use crate::estimators::{compute_advantages, AdvantageConfig, ValueBaseline};
use crate::numcore::vecops::{axpy, pairwise_sum_scalars};
use crate::numcore::RngStream;
use crate::policy::PolicyModel;
use crate::transform::InvertibleTransform;

use super::{reduce_particles, KlGradEstimate, ParticleTerm};

/// Everything needed to turn a transform into a return signal.
#[derive(Debug, Clone)]
pub struct RlTarget {
    pub env: EnvSpec,
    pub model: PolicyModel,
    pub advantage: AdvantageConfig,
    pub rollouts_per_particle: usize,
    pub baseline: ValueBaseline,
}

/// Episodes collected under one base draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub xi: Vec<f64>,
    pub trajs: Vec<Trajectory>,
    /// `thetas[j][t]`: parameter used at step `t` of episode `j`.
    pub thetas: Vec<Vec<Vec<f64>>>,
    /// Aligned with `thetas`; empty until [`assign_advantages`].
    pub advantages: Vec<Vec<f64>>,
}

impl Particle {
    pub fn num_steps(&self) -> usize {
        self.trajs.iter().map(Trajectory::len).sum()
    }
}

/// `h_phi(xi; s)` for state-conditioned transforms, `h_phi(xi)` otherwise.
pub fn theta_at<T: InvertibleTransform + ?Sized>(t: &T, xi: &[f64], state: &[f64]) -> Result<Vec<f64>> {
    if t.state_dim().is_some() {
        t.forward(xi, Some(state))
    } else {
        t.forward(xi, None)
    }
}

/// Rolls out `rollouts` episodes for each of `n_particles` base draws.
/// Particle `i` uses the stream `rng.child(i)` (its draw) and that stream's
/// children (its episodes), so results do not depend on scheduling.
pub fn collect_particles<T: InvertibleTransform + Sync + ?Sized>(
    t: &T,
    model: &PolicyModel,
    env: &EnvSpec,
    n_particles: usize,
    rollouts: usize,
    rng: &RngStream,
) -> Result<Vec<Particle>> {
    if n_particles == 0 || rollouts == 0 {
        return Err(Error::Empty("need at least one particle and one rollout".into()));
    }
    if let Some(sd) = t.state_dim() {
        ensure_len("transform state input", env.state_dim(), sd)?;
    }
    (0..n_particles)
        .into_par_iter()
        .map(|i| {
            let prng = rng.child(i as u64);
            let xi = prng.clone().normal_vec(t.dim());
            let mut trajs = Vec::with_capacity(rollouts);
            let mut thetas = Vec::with_capacity(rollouts);
            for j in 0..rollouts {
                let mut seen = Vec::with_capacity(env.horizon);
                let traj = rollout(
                    env,
                    |s, r| {
                        let theta = theta_at(t, &xi, s)?;
                        let out = model.sample(s, &theta, r)?;
                        seen.push(theta);
                        Ok(out)
                    },
                    &mut prng.child(1 + j as u64),
                )
                .map_err(|e| Error::Invalid(format!("particle {i}, rollout {j}: {e}")))?;
                trajs.push(traj);
                thetas.push(seen);
            }
            Ok(Particle {
                xi,
                trajs,
                thetas,
                advantages: Vec::new(),
            })
        })
        .collect()
}

/// Computes advantages over the whole batch (normalization, if enabled, is batch-wide).
pub fn assign_advantages(parts: &mut [Particle], baseline: &ValueBaseline, cfg: &AdvantageConfig) -> Result<()> {
    let all: Vec<Trajectory> = parts.iter().flat_map(|p| p.trajs.iter().cloned()).collect();
    let mut advs = compute_advantages(&all, baseline, cfg)?.into_iter();
    for p in parts.iter_mut() {
        p.advantages = advs.by_ref().take(p.trajs.len()).collect();
    }
    Ok(())
}

/// One step as seen by a step objective.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    /// Parameter that generated the action.
    pub theta_old: &'a [f64],
    /// Parameter under the transform being differentiated.
    pub theta: &'a [f64],
    pub advantage: f64,
}

/// A step's contribution to the per-episode objective and its `theta` gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTerm {
    pub value: f64,
    pub grad_theta: Vec<f64>,
}

pub type StepFn<'f> = dyn Fn(&StepView<'_>) -> Result<StepTerm> + Sync + 'f;

struct ParticleEval {
    grad: Vec<f64>,
    log_det: f64,
    /// `(1/alpha) R_hat + prior + log det`, i.e. `-KL` up to a constant.
    objective: f64,
    mean_return: f64,
}

fn eval_particle<T: InvertibleTransform + ?Sized>(
    t: &T,
    model: &PolicyModel,
    p: &Particle,
    alpha: f64,
    gamma: f64,
    f: &StepFn<'_>,
    index: usize,
) -> Result<ParticleEval> {
    ensure_len("advantage sequences", p.trajs.len(), p.advantages.len())?;
    let n_params = t.params().len();
    let m = p.trajs.len() as f64;
    let n_states = p.num_steps();
    if n_states == 0 {
        return Err(Error::Empty(format!("particle {index} has no steps")));
    }
    let conditioned = t.state_dim().is_some();
    let with_prior = model.aux_net().is_some();
    let mut lik = vec![0.0; n_params];
    let mut lik_theta = vec![0.0; t.dim()];
    let mut reg = vec![0.0; n_params];
    let mut value = 0.0;
    let mut log_det = 0.0;
    let mut prior = 0.0;
    for (j, traj) in p.trajs.iter().enumerate() {
        ensure_len("advantages per step", traj.len(), p.advantages[j].len())?;
        for k in 0..traj.len() {
            let s = &traj.states[k];
            let theta = theta_at(t, &p.xi, s)?;
            let term = f(&StepView {
                state: s,
                action: &traj.actions[k],
                theta_old: &p.thetas[j][k],
                theta: &theta,
                advantage: p.advantages[j][k],
            })?;
            if !term.value.is_finite() || term.grad_theta.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("target gradient at particle {index}")));
            }
            value += term.value / m;
            if conditioned {
                let g: Vec<f64> = term.grad_theta.iter().map(|g| g / m).collect();
                axpy(1.0, &t.forward_vjp(&p.xi, Some(s), &g)?, &mut lik);
                axpy(1.0 / n_states as f64, &t.log_det_grad(Some(s))?, &mut reg);
                log_det += t.log_det_jacobian(&p.xi, Some(s))? / n_states as f64;
                if with_prior {
                    // standard normal prior on theta, averaged over visited states
                    let neg: Vec<f64> = theta.iter().map(|v| -v / n_states as f64).collect();
                    axpy(1.0, &t.forward_vjp(&p.xi, Some(s), &neg)?, &mut reg);
                    prior -= 0.5 * theta.iter().map(|v| v * v).sum::<f64>() / n_states as f64;
                }
            } else {
                axpy(1.0 / m, &term.grad_theta, &mut lik_theta);
            }
        }
    }
    if !conditioned {
        lik = t.forward_vjp(&p.xi, None, &lik_theta)?;
        reg = t.log_det_grad(None)?;
        log_det = t.log_det_jacobian(&p.xi, None)?;
        if with_prior {
            let theta = t.forward(&p.xi, None)?;
            let neg: Vec<f64> = theta.iter().map(|v| -v).collect();
            axpy(1.0, &t.forward_vjp(&p.xi, None, &neg)?, &mut reg);
            prior = -0.5 * theta.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let grad: Vec<f64> = lik.iter().zip(&reg).map(|(l, r)| -(l / alpha + r)).collect();
    let mean_return = p.trajs.iter().map(|tr| tr.discounted_return(gamma)).sum::<f64>() / m;
    Ok(ParticleEval {
        grad,
        log_det,
        objective: value / alpha + prior + log_det,
        mean_return,
    })
}

fn eval_all<T: InvertibleTransform + Sync + ?Sized>(
    t: &T,
    model: &PolicyModel,
    parts: &[Particle],
    alpha: f64,
    gamma: f64,
    f: &StepFn<'_>,
) -> Result<Vec<ParticleEval>> {
    if parts.is_empty() {
        return Err(Error::Empty("particle set".into()));
    }
    parts
        .par_iter()
        .enumerate()
        .map(|(i, p)| eval_particle(t, model, p, alpha, gamma, f, i))
        .collect()
}

/// `dKL/dphi` where each step contributes `f(step)` to the particle's return
/// estimate (e.g. `score * A` for REINFORCE, an importance-weighted surrogate
/// for TRPO/PPO). `mean_target` reports the mean discounted return (`gamma`).
pub fn rl_kl_gradient_with<T: InvertibleTransform + Sync + ?Sized>(
    t: &T,
    model: &PolicyModel,
    parts: &[Particle],
    alpha: f64,
    gamma: f64,
    f: &StepFn<'_>,
) -> Result<KlGradEstimate> {
    let evals = eval_all(t, model, parts, alpha, gamma, f)?;
    let terms: Vec<ParticleTerm> = evals.into_iter().map(|e| (e.grad, e.log_det, e.mean_return)).collect();
    reduce_particles(&t.params(), terms)
}

/// Variational objective `-KL` (up to a constant) under the step objective `f`.
pub fn rl_objective_with<T: InvertibleTransform + Sync + ?Sized>(
    t: &T,
    model: &PolicyModel,
    parts: &[Particle],
    alpha: f64,
    f: &StepFn<'_>,
) -> Result<f64> {
    let evals = eval_all(t, model, parts, alpha, 1.0, f)?;
    let obj: Vec<f64> = evals.iter().map(|e| e.objective).collect();
    Ok(pairwise_sum_scalars(&obj) / obj.len() as f64)
}

/// Variational REINFORCE: `dR/dtheta_t = score(s_t, a_t) A_t`, averaged over episodes.
pub fn rl_kl_gradient<T: InvertibleTransform + Sync + ?Sized>(
    t: &T,
    model: &PolicyModel,
    parts: &[Particle],
    alpha: f64,
) -> Result<KlGradEstimate> {
    let gamma = 1.0;
    rl_kl_gradient_with(t, model, parts, alpha, gamma, &|v: &StepView<'_>| {
        let sc = model.score(v.state, v.theta, v.action)?;
        Ok(StepTerm {
            value: v.advantage,
            grad_theta: sc.theta.iter().map(|g| g * v.advantage).collect(),
        })
    })
}
