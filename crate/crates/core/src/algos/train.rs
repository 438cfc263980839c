//! Variational REINFORCE, TRPO and PPO training loops.

use std::path::Path;
use std::time::Instant;

use crate::envs::{evaluate, EnvSpec, Trajectory};
use crate::error::{ensure_len, Error, Result};
use crate::estimators::{fit_baseline, ValueBaseline};
use crate::klengine::{
    alpha_at, assign_advantages, collect_particles, rl_kl_gradient, rl_kl_gradient_with, rl_objective_with, theta_at,
    Particle, StepTerm, StepView,
};
use crate::numcore::vecops::{axpy, dot, norm, pairwise_sum};
use crate::numcore::{read_checkpoint, write_checkpoint, Activation, Mlp, MlpSpec, RngStream, ShapedParams};
use crate::policy::{aux_psi_gradient_with, PolicyModel};
use crate::transform::{AffineTransform, InvertibleTransform, StateConditionedAffine, Transform};

use super::config::{Algorithm, PolicyKind, PpoConfig, TrainConfig, TransformKind, TrpoConfig};
use super::optim::{OptimizerConfig, OptimizerState};
use super::trust::{conjugate_gradient, gaussian_kl, importance_ratio, FisherMode};

const TAG_INIT: u64 = 1;
const TAG_COLLECT: u64 = 2;
const TAG_EVAL: u64 = 3;
const TAG_FISHER: u64 = 4;

/// The evaluation stream for `seed`; [`crate::envs::lqr_optimal_return`] with
/// this stream sees the same initial states as training-time evaluation.
pub fn eval_stream(seed: u64) -> RngStream {
    RngStream::from_path(seed, &[TAG_EVAL])
}

/// Everything updated across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub transform: Transform,
    pub psi: Option<Mlp>,
    pub baseline: ValueBaseline,
    /// Completed iterations.
    pub step: usize,
    pub optimizer: OptimizerState,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        let rng = RngStream::from_path(cfg.seed, &[TAG_INIT]);
        let env = &cfg.env;
        let (theta_dim, psi) = match &cfg.policy {
            PolicyKind::Simple => (env.action_dim(), None),
            PolicyKind::Aux { theta_dim, hidden } => {
                let spec = MlpSpec::layered(
                    theta_dim + env.state_dim(),
                    hidden,
                    env.action_dim(),
                    Activation::Tanh,
                    Activation::Identity,
                )?;
                (*theta_dim, Some(Mlp::init(spec, &mut rng.child(1))))
            }
        };
        let transform: Transform = match &cfg.transform.kind {
            TransformKind::Affine => {
                AffineTransform::new(vec![0.0; theta_dim], vec![cfg.transform.init_log_sigma; theta_dim])?.into()
            }
            TransformKind::StateConditioned { hidden, scale_map } => StateConditionedAffine::init(
                env.state_dim(),
                theta_dim,
                hidden,
                *scale_map,
                cfg.transform.init_log_sigma,
                &mut rng.child(2),
            )?
            .into(),
        };
        let baseline = ValueBaseline::init(env.state_dim(), &cfg.baseline.hidden, &mut rng.child(3))?;
        let n = transform.params().len();
        Ok(TrainState {
            transform,
            psi,
            baseline,
            step: 0,
            optimizer: OptimizerState::new(n),
        })
    }

    pub fn model(&self) -> PolicyModel {
        match &self.psi {
            Some(net) => PolicyModel::Aux(net.clone()),
            None => PolicyModel::Simple,
        }
    }

    /// Transform, auxiliary and baseline parameters plus the iteration counter.
    pub fn to_params(&self) -> ShapedParams {
        let meta = ShapedParams::new(
            vec![crate::numcore::LayerShape::new("step", 1, 1)],
            vec![self.step as f64],
        )
        .expect("one value");
        let phi = self.transform.params();
        let mut parts: Vec<(&str, &ShapedParams)> = vec![("phi", &phi)];
        if let Some(net) = &self.psi {
            parts.push(("psi", &net.params));
        }
        parts.push(("baseline", &self.baseline.net.params));
        parts.push(("meta", &meta));
        ShapedParams::concat(&parts)
    }

    /// Restores parameters saved by [`to_params`](Self::to_params) into a
    /// state initialized from the same configuration.
    pub fn load_params(&self, p: &ShapedParams) -> Result<Self> {
        let missing = |name: &str| Error::Invalid(format!("checkpoint has no `{name}` blocks"));
        let phi = p.extract("phi").ok_or_else(|| missing("phi"))?;
        phi.check_manifest(self.transform.params().manifest())?;
        let transform = self.transform.with_params(&phi)?;
        let psi = match &self.psi {
            Some(net) => {
                let q = p.extract("psi").ok_or_else(|| missing("psi"))?;
                q.check_manifest(net.params.manifest())?;
                Some(net.with_params(q.into_data())?)
            }
            None => None,
        };
        let b = p.extract("baseline").ok_or_else(|| missing("baseline"))?;
        b.check_manifest(self.baseline.net.params.manifest())?;
        let baseline = ValueBaseline::new(self.baseline.net.with_params(b.into_data())?)?;
        let step = p.extract("meta").ok_or_else(|| missing("meta"))?.data()[0];
        if !(step >= 0.0 && step.fract() == 0.0) {
            return Err(Error::Invalid(format!("bad step counter {step}")));
        }
        Ok(TrainState {
            optimizer: OptimizerState::new(transform.params().len()),
            transform,
            psi,
            baseline,
            step: step as usize,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_params())
    }

    pub fn load(cfg: &TrainConfig, path: &Path) -> Result<Self> {
        TrainState::init(cfg)?.load_params(&read_checkpoint(path)?)
    }

    fn is_finite(&self) -> bool {
        self.transform.params().is_finite()
            && self.psi.as_ref().is_none_or(|n| n.params.is_finite())
            && self.baseline.net.params.is_finite()
    }
}

/// Diagnostics from one variational update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub accepted: bool,
    /// TRPO: CG did not converge; PPO: the inner loop stopped on a ratio overflow.
    pub fallback: bool,
}

/// Penalized surrogate step term: `ratio A - lambda KL(pi_old, pi_theta)`.
/// With `lambda = 0` this is the TRPO surrogate.
fn surrogate_term<'a>(model: &'a PolicyModel, lambda: f64) -> impl Fn(&StepView<'_>) -> Result<StepTerm> + Sync + 'a {
    move |v| {
        let ratio = importance_ratio(
            model.log_prob(v.state, v.theta, v.action)?,
            model.log_prob(v.state, v.theta_old, v.action)?,
        )?;
        let sc = model.score(v.state, v.theta, v.action)?.theta;
        let mean = model.mean(v.state, v.theta)?;
        let mean_old = model.mean(v.state, v.theta_old)?;
        let diff: Vec<f64> = mean.iter().zip(&mean_old).map(|(a, b)| a - b).collect();
        let kl_grad = model.mean_vjp(v.state, v.theta, &diff)?.theta;
        let w = ratio * v.advantage;
        Ok(StepTerm {
            value: w - lambda * gaussian_kl(&mean, &mean_old),
            grad_theta: sc.iter().zip(&kl_grad).map(|(s, k)| w * s - lambda * k).collect(),
        })
    }
}

fn zero_term(v: &StepView<'_>) -> Result<StepTerm> {
    Ok(StepTerm {
        value: 0.0,
        grad_theta: vec![0.0; v.theta.len()],
    })
}

/// Mean over all visited states of `KL(pi_old(.|s) || pi_new(.|s))`, where the
/// old policy is the one that generated the batch.
pub fn batch_policy_kl(t_new: &Transform, model_new: &PolicyModel, model_old: &PolicyModel, parts: &[Particle]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for p in parts {
        for (traj, thetas) in p.trajs.iter().zip(&p.thetas) {
            for (s, th_old) in traj.states.iter().zip(thetas) {
                let th = theta_at(t_new, &p.xi, s)?;
                total += gaussian_kl(&model_new.mean(s, &th)?, &model_old.mean(s, th_old)?);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Empty("no states in batch".into()));
    }
    Ok(total / n as f64)
}

fn apply_descent(state: &mut TrainState, opt: &OptimizerConfig, grad: &[f64]) -> Result<()> {
    let mut params = state.transform.params().into_data();
    state.optimizer.descend(opt, &mut params, grad);
    state.transform = state.transform.with_params(&state.transform.params().with_data(params)?)?;
    Ok(())
}

/// Variational REINFORCE: one descent step on the KL gradient with the
/// score-function return term.
pub fn reinforce_variational_step(
    state: &mut TrainState,
    parts: &[Particle],
    alpha: f64,
    opt: &OptimizerConfig,
) -> Result<StepInfo> {
    let model = state.model();
    let est = rl_kl_gradient(&state.transform, &model, parts, alpha)?;
    apply_descent(state, opt, est.grad_phi.data())?;
    Ok(StepInfo {
        grad_norm: norm(est.grad_phi.data()),
        accepted: true,
        fallback: false,
    })
}

/// Variational PPO: `inner_epochs` descent steps with the KL-penalized
/// surrogate as the return signal. A ratio overflow stops the inner loop.
pub fn ppo_variational_step(
    state: &mut TrainState,
    parts: &[Particle],
    alpha: f64,
    opt: &OptimizerConfig,
    ppo: &PpoConfig,
) -> Result<StepInfo> {
    let model = state.model();
    let term = surrogate_term(&model, ppo.lambda_kl);
    let mut info = StepInfo {
        grad_norm: 0.0,
        accepted: true,
        fallback: false,
    };
    for epoch in 0..ppo.inner_epochs {
        let est = match rl_kl_gradient_with(&state.transform, &model, parts, alpha, 1.0, &term) {
            Ok(e) => e,
            Err(Error::RatioOverflow { .. }) if epoch > 0 => {
                info.fallback = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if epoch == 0 {
            info.grad_norm = norm(est.grad_phi.data());
        }
        apply_descent(state, opt, est.grad_phi.data())?;
    }
    Ok(info)
}

/// Natural-gradient slot: a block of `theta` sharing one Fisher block.
struct Slot {
    particle: usize,
    /// Conditioning state for the transform (`None` when unconditioned).
    cond: Option<Vec<f64>>,
    /// States and parameters over which the slot's Fisher block is averaged.
    fisher: Vec<(Vec<f64>, Vec<f64>)>,
    /// Score vectors for the score-covariance mode.
    scores: Vec<Vec<f64>>,
    grad: Vec<f64>,
}

fn build_slots(
    t: &Transform,
    model: &PolicyModel,
    parts: &[Particle],
    mode: FisherMode,
    rng: &RngStream,
) -> Result<Vec<Slot>> {
    let conditioned = t.state_dim().is_some();
    let dim = t.dim();
    let mut slots = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        ensure_len("advantage sequences", p.trajs.len(), p.advantages.len())?;
        let m = p.trajs.len() as f64;
        let mut shared: Option<Slot> = None;
        for (j, traj) in p.trajs.iter().enumerate() {
            for k in 0..traj.len() {
                let s = &traj.states[k];
                let th = &p.thetas[j][k];
                let sc = model.score(s, th, &traj.actions[k])?.theta;
                let g: Vec<f64> = sc.iter().map(|v| v * p.advantages[j][k] / m).collect();
                let scores = match mode {
                    FisherMode::KlHessian => Vec::new(),
                    FisherMode::ScoreCovariance { samples } => {
                        let mut r = rng.child(stream_tag(i, j, k));
                        (0..samples)
                            .map(|_| {
                                let (a, _) = model.sample(s, th, &mut r)?;
                                Ok(model.score(s, th, &a)?.theta)
                            })
                            .collect::<Result<Vec<_>>>()?
                    }
                };
                if conditioned {
                    slots.push(Slot {
                        particle: i,
                        cond: Some(s.clone()),
                        fisher: vec![(s.clone(), th.clone())],
                        scores,
                        grad: g,
                    });
                } else {
                    let slot = shared.get_or_insert_with(|| Slot {
                        particle: i,
                        cond: None,
                        fisher: Vec::new(),
                        scores: Vec::new(),
                        grad: vec![0.0; dim],
                    });
                    slot.fisher.push((s.clone(), th.clone()));
                    slot.scores.extend(scores);
                    axpy(1.0, &g, &mut slot.grad);
                }
            }
        }
        slots.extend(shared);
    }
    Ok(slots)
}

fn stream_tag(i: usize, j: usize, k: usize) -> u64 {
    crate::numcore::stream_id(&[i as u64, j as u64, k as u64])
}

fn slot_fisher(model: &PolicyModel, slot: &Slot, v: &[f64], mode: FisherMode, damping: f64) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; v.len()];
    match mode {
        FisherMode::KlHessian => {
            for (n, (s, th)) in slot.fisher.iter().enumerate() {
                let hv = model.fisher_vector(s, th, v)?;
                for (a, b) in mean.iter_mut().zip(&hv) {
                    *a += (b - *a) / (n + 1) as f64;
                }
            }
        }
        FisherMode::ScoreCovariance { .. } => {
            for (n, sc) in slot.scores.iter().enumerate() {
                let w = dot(sc, v);
                for (a, b) in mean.iter_mut().zip(sc) {
                    *a += (b * w - *a) / (n + 1) as f64;
                }
            }
        }
    }
    axpy(damping, v, &mut mean);
    Ok(mean)
}

/// The TRPO step before the line search.
#[derive(Debug, Clone, PartialEq)]
pub struct TrpoProposal {
    /// `dKL/dphi` with the likelihood factor preconditioned in `theta`-space.
    pub grad: Vec<f64>,
    /// Step length along `-grad` after the trust-region cap.
    pub step: f64,
    /// Quadratic-model policy KL of a unit step along `-grad`.
    pub quad_kl_unit: f64,
    pub cg_fallback: bool,
}

/// Natural-gradient direction and trust-region-capped step length.
pub fn trpo_proposal(
    t: &Transform,
    model: &PolicyModel,
    parts: &[Particle],
    alpha: f64,
    step_size: f64,
    cfg: &TrpoConfig,
    rng: &RngStream,
) -> Result<TrpoProposal> {
    let slots = build_slots(t, model, parts, cfg.fisher_mode, rng)?;
    let dim = t.dim();
    let b: Vec<f64> = slots.iter().flat_map(|s| s.grad.iter().copied()).collect();
    let cg = conjugate_gradient(
        |x| {
            let mut out = Vec::with_capacity(x.len());
            for (slot, chunk) in slots.iter().zip(x.chunks(dim)) {
                out.extend(slot_fisher(model, slot, chunk, cfg.fisher_mode, cfg.cg_damping)?);
            }
            Ok(out)
        },
        &b,
        cfg.cg_iters,
        1e-10,
    )?;
    let n_params = t.params().len();
    let grad = if cg.converged {
        let mut per_particle = vec![vec![0.0; n_params]; parts.len()];
        for (slot, x) in slots.iter().zip(cg.x.chunks(dim)) {
            let pull = t.forward_vjp(&parts[slot.particle].xi, slot.cond.as_deref(), x)?;
            axpy(1.0, &pull, &mut per_particle[slot.particle]);
        }
        let mut nat = pairwise_sum(&per_particle, n_params);
        let scale = 1.0 / (parts.len() as f64 * alpha);
        nat.iter_mut().for_each(|v| *v *= scale);
        let rep = rl_kl_gradient_with(t, model, parts, alpha, 1.0, &zero_term)?;
        rep.grad_phi.data().iter().zip(&nat).map(|(r, n)| r - n).collect()
    } else {
        rl_kl_gradient(t, model, parts, alpha)?.grad_phi.into_data()
    };
    let dir: Vec<f64> = grad.iter().map(|g| -g).collect();
    let quad = quadratic_kl(t, model, parts, &dir)?;
    let mut step = step_size;
    if quad > 0.0 {
        let cap = (cfg.delta / quad).sqrt();
        if cg.converged {
            step = step.min(cap);
        } else {
            // plain gradient step scaled to the trust region
            step = cap;
        }
    }
    Ok(TrpoProposal {
        grad,
        step,
        quad_kl_unit: quad,
        cg_fallback: !cg.converged,
    })
}

/// `1/2 mean_t ||J_t (d theta_t / d phi) d||^2` over the batch states.
fn quadratic_kl(t: &Transform, model: &PolicyModel, parts: &[Particle], d: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for p in parts {
        let shared = if t.state_dim().is_none() {
            Some(t.forward_jvp(&p.xi, None, d)?)
        } else {
            None
        };
        for (traj, thetas) in p.trajs.iter().zip(&p.thetas) {
            for (s, th) in traj.states.iter().zip(thetas) {
                let dth = match &shared {
                    Some(v) => v.clone(),
                    None => t.forward_jvp(&p.xi, Some(s), d)?,
                };
                let dm = model.mean_jvp(s, th, &dth)?;
                total += 0.5 * dot(&dm, &dm);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Empty("no states in batch".into()));
    }
    Ok(total / n as f64)
}

/// Variational TRPO: natural-gradient step capped by the trust region, then
/// halved until the variational surrogate improves and the measured mean
/// policy KL is within `delta`; no step if that never happens.
pub fn trpo_variational_step(
    state: &mut TrainState,
    parts: &[Particle],
    alpha: f64,
    step_size: f64,
    cfg: &TrpoConfig,
    rng: &RngStream,
) -> Result<StepInfo> {
    let model = state.model();
    let t = state.transform.clone();
    let prop = trpo_proposal(&t, &model, parts, alpha, step_size, cfg, rng)?;
    let term = surrogate_term(&model, 0.0);
    let before = rl_objective_with(&t, &model, parts, alpha, &term)?;
    let phi = t.params();
    let mut step = prop.step;
    let mut accepted = false;
    for _ in 0..=cfg.backtrack_steps {
        let mut cand = phi.data().to_vec();
        axpy(-step, &prop.grad, &mut cand);
        let cand_t = t.with_params(&phi.with_data(cand)?)?;
        let after = match rl_objective_with(&cand_t, &model, parts, alpha, &term) {
            Ok(v) => v,
            Err(Error::RatioOverflow { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if after > before && batch_policy_kl(&cand_t, &model, &model, parts)? <= cfg.delta {
            state.transform = cand_t;
            accepted = true;
            break;
        }
        step *= 0.5;
    }
    Ok(StepInfo {
        grad_norm: norm(&prop.grad),
        accepted,
        fallback: prop.cg_fallback,
    })
}

/// Plain gradient ascent on the auxiliary network over the batch.
fn update_psi(net: &Mlp, parts: &[Particle], step: f64) -> Result<Mlp> {
    let trajs: Vec<Trajectory> = parts.iter().flat_map(|p| p.trajs.iter().cloned()).collect();
    let thetas: Vec<Vec<Vec<f64>>> = parts.iter().flat_map(|p| p.thetas.iter().cloned()).collect();
    let advs: Vec<Vec<f64>> = parts.iter().flat_map(|p| p.advantages.iter().cloned()).collect();
    let g = aux_psi_gradient_with(net, &trajs, &thetas, &advs)?;
    let mut p = net.params.data().to_vec();
    axpy(step, &g, &mut p);
    net.with_params(p)
}

/// Returns of the mean policy: `xi = 0` and noise-free actions.
pub fn evaluate_mean_policy(
    t: &Transform,
    model: &PolicyModel,
    env: &EnvSpec,
    n_eval: usize,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    let xi0 = vec![0.0; t.dim()];
    evaluate(
        env,
        |_, s| {
            let th = theta_at(t, &xi0, s)?;
            model.mean(s, &th)
        },
        n_eval,
        rng,
    )
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub iteration: usize,
    pub wall_seconds: f64,
    pub values: Vec<(&'static str, f64)>,
}

impl MetricRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// Column order of [`MetricRecord::values`].
pub const METRIC_NAMES: [&str; 10] = [
    "alpha",
    "mean_return",
    "eval_return",
    "kl_old",
    "grad_norm",
    "log_det_mean",
    "log_sigma_mean",
    "step_accepted",
    "fallback",
    "baseline_loss",
];

/// Drives training one iteration at a time. A failed iteration leaves the
/// state at the last good iteration.
pub struct Trainer {
    cfg: TrainConfig,
    state: TrainState,
    start: Instant,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let state = TrainState::init(&cfg)?;
        Ok(Trainer {
            cfg,
            state,
            start: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.cfg.iterations
    }

    pub fn collect(&self) -> Result<Vec<Particle>> {
        let k = self.state.step as u64;
        let rng = RngStream::from_path(self.cfg.seed, &[TAG_COLLECT, k]);
        let mut parts = collect_particles(
            &self.state.transform,
            &self.state.model(),
            &self.cfg.env,
            self.cfg.n_particles,
            self.cfg.rollouts_per_particle,
            &rng,
        )?;
        if self.cfg.reward_scale != 1.0 {
            for tr in parts.iter_mut().flat_map(|p| p.trajs.iter_mut()) {
                tr.rewards.iter_mut().for_each(|r| *r *= self.cfg.reward_scale);
            }
        }
        assign_advantages(&mut parts, &self.state.baseline, &self.cfg.advantage)?;
        Ok(parts)
    }

    /// Runs one iteration and returns its metrics. Non-finite values anywhere
    /// in the iteration are reported as [`Error::Diverged`].
    pub fn step(&mut self) -> Result<MetricRecord> {
        let k = self.state.step;
        self.step_inner().map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged { step: k, what },
            e => e,
        })
    }

    fn step_inner(&mut self) -> Result<MetricRecord> {
        let cfg = &self.cfg;
        let k = self.state.step;
        let alpha = alpha_at(&cfg.schedule, k);
        let parts = self.collect()?;
        let old_model = self.state.model();
        let opt = cfg.optimizer.at_iteration(k);
        let mut next = self.state.clone();
        let info = match &cfg.algorithm {
            Algorithm::Vpg => reinforce_variational_step(&mut next, &parts, alpha, &opt)?,
            Algorithm::Ppo(p) => ppo_variational_step(&mut next, &parts, alpha, &opt, p)?,
            Algorithm::Trpo(t) => {
                let rng = RngStream::from_path(cfg.seed, &[TAG_FISHER, k as u64]);
                trpo_variational_step(&mut next, &parts, alpha, opt.step_size, t, &rng)?
            }
        };
        if let Some(net) = &self.state.psi {
            if cfg.psi_step_size > 0.0 {
                next.psi = Some(update_psi(net, &parts, cfg.psi_step_size)?);
            }
        }
        let new_model = next.model();
        let kl_old = batch_policy_kl(&next.transform, &new_model, &old_model, &parts)?;
        let trajs: Vec<Trajectory> = parts.iter().flat_map(|p| p.trajs.iter().cloned()).collect();
        let (baseline, losses) = fit_baseline(
            &self.state.baseline,
            &trajs,
            cfg.baseline.epochs,
            cfg.baseline.step_size,
            cfg.advantage.gamma,
        )?;
        next.baseline = baseline;
        next.step = k + 1;
        if !next.is_finite() {
            return Err(Error::Diverged {
                step: k,
                what: "non-finite parameters".into(),
            });
        }
        let evals = evaluate_mean_policy(&next.transform, &new_model, &cfg.env, cfg.n_eval, &eval_stream(cfg.seed))?;
        let eval_return = evals.iter().sum::<f64>() / evals.len() as f64;
        let mean_return = trajs.iter().map(|t| t.discounted_return(cfg.env.gamma)).sum::<f64>() / trajs.len() as f64;
        let (log_sigma_mean, log_det_mean) = log_sigma_stats(&next.transform, &parts)?;
        let values = vec![
            ("alpha", alpha),
            ("mean_return", mean_return),
            ("eval_return", eval_return),
            ("kl_old", kl_old),
            ("grad_norm", info.grad_norm),
            ("log_det_mean", log_det_mean),
            ("log_sigma_mean", log_sigma_mean),
            ("step_accepted", f64::from(u8::from(info.accepted))),
            ("fallback", f64::from(u8::from(info.fallback))),
            ("baseline_loss", *losses.last().unwrap_or(&0.0)),
        ];
        if let Some((name, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Diverged {
                step: k,
                what: format!("non-finite metric {name}"),
            });
        }
        self.state = next;
        Ok(MetricRecord {
            iteration: k,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            values,
        })
    }
}

/// Mean `log sigma` coordinate and mean log-determinant over the batch states.
fn log_sigma_stats(t: &Transform, parts: &[Particle]) -> Result<(f64, f64)> {
    if t.state_dim().is_none() {
        let ls = t.log_sigma_at(None)?;
        let sum: f64 = ls.iter().sum();
        return Ok((sum / ls.len() as f64, sum));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for p in parts {
        for traj in &p.trajs {
            for s in &traj.states {
                total += t.log_sigma_at(Some(s))?.iter().sum::<f64>();
                n += 1;
            }
        }
    }
    let det = total / n.max(1) as f64;
    Ok((det / t.dim() as f64, det))
}

/// Final state and per-iteration metrics of a full run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub state: TrainState,
    pub metrics: Vec<MetricRecord>,
}

pub fn train(cfg: TrainConfig) -> Result<TrainRun> {
    let mut trainer = Trainer::new(cfg)?;
    let mut metrics = Vec::new();
    while !trainer.is_done() {
        metrics.push(trainer.step()?);
    }
    Ok(TrainRun {
        state: trainer.into_state(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::config::TransformConfig;
    use crate::algos::optim::OptimizerKind;
    use crate::klengine::TemperatureSchedule;

    fn lqr_cfg(algorithm: Algorithm, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(EnvSpec::builtin("lqr").unwrap(), algorithm, seed);
        cfg.n_particles = 4;
        cfg.n_eval = 4;
        cfg
    }

    fn sgd(step_size: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            step_size,
            ..OptimizerConfig::default()
        }
    }

    fn rel_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        let scale = norm(b).max(1e-12);
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        assert!(norm(&d) / scale < tol, "relative difference {}", norm(&d) / scale);
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let mut cfg = lqr_cfg(Algorithm::Vpg, 3);
        cfg.iterations = 0;
        let run = train(cfg.clone()).unwrap();
        assert!(run.metrics.is_empty());
        assert_eq!(run.state, TrainState::init(&cfg).unwrap());
    }

    #[test]
    fn metrics_are_bit_identical_across_runs() {
        for algo in [Algorithm::Vpg, Algorithm::Ppo(PpoConfig::default()), Algorithm::Trpo(TrpoConfig::default())] {
            let mut cfg = lqr_cfg(algo, 11);
            cfg.iterations = 3;
            let a = train(cfg.clone()).unwrap();
            let b = train(cfg).unwrap();
            assert_eq!(a.state, b.state);
            for (x, y) in a.metrics.iter().zip(&b.metrics) {
                let xs: Vec<u64> = x.values.iter().map(|(_, v)| v.to_bits()).collect();
                let ys: Vec<u64> = y.values.iter().map(|(_, v)| v.to_bits()).collect();
                assert_eq!(xs, ys);
            }
        }
    }

    #[test]
    fn ppo_one_epoch_without_penalty_is_reinforce() {
        let cfg = lqr_cfg(Algorithm::Vpg, 5);
        let trainer = Trainer::new(cfg).unwrap();
        let parts = trainer.collect().unwrap();
        let opt = sgd(0.01);
        let mut a = trainer.state().clone();
        let mut b = a.clone();
        reinforce_variational_step(&mut a, &parts, 0.5, &opt).unwrap();
        let ppo = PpoConfig {
            lambda_kl: 0.0,
            inner_epochs: 1,
        };
        ppo_variational_step(&mut b, &parts, 0.5, &opt, &ppo).unwrap();
        assert_eq!(a.transform, b.transform);
    }

    #[test]
    fn ppo_kl_shrinks_as_penalty_grows() {
        let cfg = lqr_cfg(Algorithm::Vpg, 6);
        let trainer = Trainer::new(cfg).unwrap();
        let parts = trainer.collect().unwrap();
        let model = trainer.state().model();
        // the penalty's effective step is step_size * lambda, kept stable at lambda = 10
        let opt = sgd(1e-4);
        let kls: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&lambda_kl| {
                let mut s = trainer.state().clone();
                let ppo = PpoConfig {
                    lambda_kl,
                    inner_epochs: 4,
                };
                ppo_variational_step(&mut s, &parts, 1.0, &opt, &ppo).unwrap();
                batch_policy_kl(&s.transform, &s.model(), &model, &parts).unwrap()
            })
            .collect();
        assert!(kls[0] > kls[1] && kls[1] > kls[2], "{kls:?}");
    }

    fn unbounded_trpo() -> TrpoConfig {
        TrpoConfig {
            delta: 1e300,
            cg_damping: 1e-12,
            ..TrpoConfig::default()
        }
    }

    #[test]
    fn trpo_with_identity_fisher_and_no_trust_region_is_plain_gradient() {
        let cfg = lqr_cfg(Algorithm::Vpg, 7);
        let trainer = Trainer::new(cfg).unwrap();
        let parts = trainer.collect().unwrap();
        let state = trainer.state();
        let model = state.model();
        let rng = RngStream::new(0, 0);
        let plain = rl_kl_gradient(&state.transform, &model, &parts, 0.5).unwrap();
        let prop = trpo_proposal(&state.transform, &model, &parts, 0.5, 1.0, &unbounded_trpo(), &rng).unwrap();
        assert_eq!(prop.step, 1.0);
        assert!(!prop.cg_fallback);
        rel_close(&prop.grad, plain.grad_phi.data(), 1e-9);

        // a short step is accepted at once and matches plain SGD
        let eta = 1e-4;
        let mut s = state.clone();
        let info = trpo_variational_step(&mut s, &parts, 0.5, eta, &unbounded_trpo(), &rng).unwrap();
        assert!(info.accepted);
        let mut expect = state.clone();
        apply_descent(&mut expect, &sgd(eta), plain.grad_phi.data()).unwrap();
        rel_close(s.transform.params().data(), expect.transform.params().data(), 1e-9);
    }

    #[test]
    fn zero_advantage_trpo_step_respects_trust_region() {
        let mut cfg = lqr_cfg(Algorithm::Trpo(TrpoConfig::default()), 8);
        cfg.reward_scale = 0.0;
        cfg.optimizer.step_size = 10.0;
        let delta = TrpoConfig::default().delta;
        let mut trainer = Trainer::new(cfg).unwrap();
        for _ in 0..3 {
            let m = trainer.step().unwrap();
            assert!(m.get("kl_old").unwrap() <= delta);
        }
    }

    #[test]
    fn infinite_temperature_matches_zero_rewards() {
        let mut hot = lqr_cfg(Algorithm::Vpg, 9);
        hot.iterations = 4;
        hot.schedule = TemperatureSchedule::constant(1e300);
        let mut cold = hot.clone();
        cold.schedule = TemperatureSchedule::constant(1.0);
        cold.reward_scale = 0.0;
        let a = train(hot).unwrap();
        let b = train(cold).unwrap();
        rel_close(a.state.transform.params().data(), b.state.transform.params().data(), 1e-12);
    }

    #[test]
    fn pure_repulsion_grows_affine_scale() {
        let mut cfg = lqr_cfg(Algorithm::Vpg, 10);
        cfg.iterations = 5;
        cfg.reward_scale = 0.0;
        cfg.transform = TransformConfig {
            kind: TransformKind::Affine,
            ..TransformConfig::default()
        };
        let run = train(cfg).unwrap();
        let ls: Vec<f64> = run.metrics.iter().map(|m| m.get("log_sigma_mean").unwrap()).collect();
        assert!(ls.windows(2).all(|w| w[1] > w[0]), "{ls:?}");
    }

    #[test]
    fn divergence_keeps_last_good_state() {
        let mut cfg = lqr_cfg(Algorithm::Vpg, 12);
        cfg.optimizer = sgd(1e300);
        let mut trainer = Trainer::new(cfg).unwrap();
        let before = trainer.state().clone();
        let mut err = None;
        for _ in 0..3 {
            if let Err(e) = trainer.step() {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(Error::Diverged { .. })), "{err:?}");
        assert!(trainer.state().is_finite());
        assert!(trainer.state().step <= 2);
        if trainer.state().step == 0 {
            assert_eq!(trainer.state(), &before);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut cfg = lqr_cfg(Algorithm::Ppo(PpoConfig::default()), 13);
        cfg.iterations = 2;
        cfg.policy = PolicyKind::Aux {
            theta_dim: 3,
            hidden: vec![4],
        };
        let run = train(cfg.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        run.state.save(&path).unwrap();
        let back = TrainState::load(&cfg, &path).unwrap();
        assert_eq!(back.transform, run.state.transform);
        assert_eq!(back.psi, run.state.psi);
        assert_eq!(back.baseline, run.state.baseline);
        assert_eq!(back.step, 2);
    }
}
