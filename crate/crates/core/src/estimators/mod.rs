//! Returns, value baselines, advantages (TD and GAE) and the likelihood-ratio
//! policy gradient.

use crate::envs::Trajectory;
use crate::error::{ensure_len, Error, Result};
use crate::numcore::vecops::axpy;
use crate::numcore::{Activation, Mlp, MlpSpec, RngStream};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvantageMode {
    /// `G_t - V(s_t)`
    McReturnMinusBaseline,
    /// One-step TD residuals.
    Td,
    Gae,
}

impl AdvantageMode {
    pub fn name(self) -> &'static str {
        match self {
            AdvantageMode::McReturnMinusBaseline => "mc_return_minus_baseline",
            AdvantageMode::Td => "td",
            AdvantageMode::Gae => "gae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mc_return_minus_baseline" => Some(AdvantageMode::McReturnMinusBaseline),
            "td" => Some(AdvantageMode::Td),
            "gae" => Some(AdvantageMode::Gae),
            _ => None,
        }
    }
}

/// Form of the one-step residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdForm {
    /// `r_t + gamma V(s_{t+1}) - V(s_t)`
    Standard,
    /// `r_t + V(s_t) - V(s_{t+1})`, kept for comparison runs only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageConfig {
    pub mode: AdvantageMode,
    pub gamma: f64,
    /// Only used in GAE mode.
    pub lambda: f64,
    pub normalize: bool,
    pub td_form: TdForm,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        AdvantageConfig {
            mode: AdvantageMode::Gae,
            gamma: 0.99,
            lambda: 0.95,
            normalize: true,
            td_form: TdForm::Standard,
        }
    }
}

impl AdvantageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// State-value network `V(s)` with a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBaseline {
    pub net: Mlp,
}

impl ValueBaseline {
    pub fn new(net: Mlp) -> Result<Self> {
        ensure_len("value baseline output", 1, net.spec.output_dim())?;
        Ok(ValueBaseline { net })
    }

    /// Tanh hidden layers, zero-initialized output layer (so `V = 0` at start).
    pub fn init(state_dim: usize, hidden: &[usize], rng: &mut RngStream) -> Result<Self> {
        let spec = MlpSpec::layered(state_dim, hidden, 1, Activation::Tanh, Activation::Identity)?;
        ValueBaseline::new(Mlp::init(spec, rng).with_output_layer(0.0))
    }

    /// The constant-zero baseline.
    pub fn zero(state_dim: usize) -> Self {
        let spec = MlpSpec::layered(state_dim, &[], 1, Activation::Identity, Activation::Identity)
            .expect("valid spec");
        ValueBaseline { net: Mlp::zeros(spec) }
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.net.forward(state)?[0])
    }
}

/// `G_t = sum_{k >= t} gamma^(k - t) r_k`
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `V(s_0), ..., V(s_{T-1}), V(s_T)` with `V(s_T) = 0` (episodes are terminal at the horizon).
fn values_with_terminal(traj: &Trajectory, v: &ValueBaseline) -> Result<Vec<f64>> {
    let mut vals = traj
        .states
        .iter()
        .map(|s| v.value(s))
        .collect::<Result<Vec<_>>>()?;
    vals.push(0.0);
    Ok(vals)
}

pub fn td_residuals(traj: &Trajectory, v: &ValueBaseline, gamma: f64, form: TdForm) -> Result<Vec<f64>> {
    let vals = values_with_terminal(traj, v)?;
    Ok(traj
        .rewards
        .iter()
        .enumerate()
        .map(|(t, r)| match form {
            TdForm::Standard => r + gamma * vals[t + 1] - vals[t],
            TdForm::Literal => r + vals[t] - vals[t + 1],
        })
        .collect())
}

/// One-step TD advantages `r_t + gamma V(s_{t+1}) - V(s_t)`.
pub fn td_advantage(traj: &Trajectory, v: &ValueBaseline, gamma: f64) -> Result<Vec<f64>> {
    td_residuals(traj, v, gamma, TdForm::Standard)
}

/// `A_t = sum_{k >= t} (gamma lambda)^(k - t) delta_k`
pub fn gae(traj: &Trajectory, v: &ValueBaseline, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    gae_with(traj, v, gamma, lambda, TdForm::Standard)
}

fn gae_with(traj: &Trajectory, v: &ValueBaseline, gamma: f64, lambda: f64, form: TdForm) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let deltas = td_residuals(traj, v, gamma, form)?;
    Ok(discounted_returns(&deltas, gamma * lambda))
}

/// In-place batch normalization to mean 0 and (population) variance 1.
/// A constant batch is only centered.
pub fn normalize_advantages(advs: &mut [Vec<f64>]) {
    let n: usize = advs.iter().map(Vec::len).sum();
    if n == 0 {
        return;
    }
    let mean = advs.iter().flatten().sum::<f64>() / n as f64;
    let var = advs.iter().flatten().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let inv = if std > 1e-12 { 1.0 / std } else { 1.0 };
    for a in advs.iter_mut().flatten() {
        *a = (*a - mean) * inv;
    }
}

/// Advantages for a batch according to `cfg`.
pub fn compute_advantages(trajs: &[Trajectory], v: &ValueBaseline, cfg: &AdvantageConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mut advs = trajs
        .iter()
        .map(|t| match cfg.mode {
            AdvantageMode::McReturnMinusBaseline => {
                let g = discounted_returns(&t.rewards, cfg.gamma);
                t.states
                    .iter()
                    .zip(g)
                    .map(|(s, g)| Ok(g - v.value(s)?))
                    .collect::<Result<Vec<_>>>()
            }
            AdvantageMode::Td => td_residuals(t, v, cfg.gamma, cfg.td_form),
            AdvantageMode::Gae => gae_with(t, v, cfg.gamma, cfg.lambda, cfg.td_form),
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.normalize {
        normalize_advantages(&mut advs);
    }
    Ok(advs)
}

fn baseline_loss(v: &ValueBaseline, data: &[(&[f64], f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (s, g) in data {
        total += 0.5 * (v.value(s)? - g).powi(2);
    }
    Ok(total / data.len() as f64)
}

/// Least-squares regression of `V(s_t)` onto discounted returns by full-batch
/// gradient descent. A step that would raise the loss is halved until it does
/// not (or skipped), so the loss trace is non-increasing.
///
/// Returns the fitted baseline and the loss before each epoch plus the final loss.
pub fn fit_baseline(
    v: &ValueBaseline,
    trajs: &[Trajectory],
    epochs: usize,
    step_size: f64,
    gamma: f64,
) -> Result<(ValueBaseline, Vec<f64>)> {
    if trajs.is_empty() {
        return Err(Error::Empty("baseline fit needs at least one trajectory".into()));
    }
    let targets: Vec<Vec<f64>> = trajs.iter().map(|t| discounted_returns(&t.rewards, gamma)).collect();
    let data: Vec<(&[f64], f64)> = trajs
        .iter()
        .zip(&targets)
        .flat_map(|(t, g)| t.states.iter().map(|s| s.as_slice()).zip(g.iter().copied()))
        .collect();
    let n = data.len() as f64;
    let mut cur = v.clone();
    let mut loss = baseline_loss(&cur, &data)?;
    let mut trace = vec![loss];
    for _ in 0..epochs {
        let mut grad = vec![0.0; cur.net.params.len()];
        for (s, g) in &data {
            let err = cur.value(s)? - g;
            let (pg, _) = cur.net.backward(s, &[err / n])?;
            axpy(1.0, pg.data(), &mut grad);
        }
        let mut step = step_size;
        for _ in 0..30 {
            let mut p = cur.net.params.data().to_vec();
            axpy(-step, &grad, &mut p);
            let cand = ValueBaseline::new(cur.net.with_params(p)?)?;
            let l = baseline_loss(&cand, &data)?;
            if l.is_finite() && l <= loss {
                cur = cand;
                loss = l;
                break;
            }
            step *= 0.5;
        }
        trace.push(loss);
    }
    Ok((cur, trace))
}

/// Likelihood-ratio gradient `mean over trajectories of sum_t score(s_t, a_t) A_t`
/// for a fixed policy.
pub fn policy_gradient<P: Policy + ?Sized>(trajs: &[Trajectory], policy: &P, advantages: &[Vec<f64>]) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(Error::Empty("policy gradient needs at least one trajectory".into()));
    }
    ensure_len("advantage sequences", trajs.len(), advantages.len())?;
    let mut grad: Option<Vec<f64>> = None;
    for (t, advs) in trajs.iter().zip(advantages) {
        ensure_len("advantages per step", t.len(), advs.len())?;
        for k in 0..t.len() {
            let sc = policy.score_inverse_form(&t.states[k], &t.actions[k])?.theta;
            let g = grad.get_or_insert_with(|| vec![0.0; sc.len()]);
            axpy(advs[k], &sc, g);
        }
    }
    let mut g = grad.ok_or_else(|| Error::Empty("all trajectories are empty".into()))?;
    g.iter_mut().for_each(|x| *x /= trajs.len() as f64);
    Ok(g)
}
