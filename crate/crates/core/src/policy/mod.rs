//! Stochastic policies induced by an invertible action map `a = g(s, zeta)`
//! with `zeta ~ N(0, I)`.
//!
//! Both shipped policies use unit additive noise, `a = mean(s) + zeta`, so the
//! action map's Jacobian in `zeta` is the identity and its log-determinant is
//! zero. Scores come in two equivalent forms: through the inverse
//! `zeta = a - mean(s)`, or from the recorded noise `zeta` directly.

use crate::envs::Trajectory;
use crate::error::{ensure_len, Error, Result};
use crate::numcore::vecops::{axpy, sub};
use crate::numcore::{mlp_jvp, Mlp, RngStream};
use crate::transform::{pushforward_logpdf, AffineTransform, BaseDensity};

/// Gradient of `log pi` with respect to the policy's inputs/parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    /// With respect to the (random) parameter `theta`.
    pub theta: Vec<f64>,
    /// With respect to the auxiliary network parameters, when present.
    pub psi: Option<Vec<f64>>,
}

pub trait Policy {
    fn action_dim(&self) -> usize;

    fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>>;

    /// Pulls `upstream` back through `d mean / d theta` (and `d mean / d psi`).
    fn mean_vjp(&self, state: &[f64], upstream: &[f64]) -> Result<Score>;

    /// Pushes a `theta` tangent forward through `d mean / d theta`.
    fn mean_jvp(&self, state: &[f64], tangent: &[f64]) -> Result<Vec<f64>>;

    /// `J^T J v`: the Hessian of `KL(pi_old || pi_theta)` at `theta_old`
    /// applied to `v` (the unit-covariance Gaussian Fisher at one state).
    fn fisher_vector(&self, state: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let jv = self.mean_jvp(state, v)?;
        Ok(self.mean_vjp(state, &jv)?.theta)
    }

    /// The action map `g(s, zeta) = mean(s) + zeta`.
    fn action_transform(&self, state: &[f64]) -> Result<AffineTransform> {
        let m = self.mean_action(state)?;
        let d = m.len();
        AffineTransform::new(m, vec![0.0; d])
    }

    fn sample_action(&self, state: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        let zeta = rng.normal_vec(self.action_dim());
        let a = self.action_from_noise(state, &zeta)?;
        Ok((a, zeta))
    }

    fn action_from_noise(&self, state: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        use crate::transform::InvertibleTransform;
        self.action_transform(state)?.forward(zeta, None)
    }

    /// Density of the induced policy via the change of variables through the action map.
    fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let g = self.action_transform(state)?;
        pushforward_logpdf(&g, &BaseDensity::standard_normal(self.action_dim()), action, None)
    }

    /// `d/dtheta log pi0(g^-1(a)) - d/dtheta log det(dg/dzeta)`.
    ///
    /// With `g^-1(a) = a - mean`, the first term is `J^T (a - mean)` and the
    /// log-determinant term vanishes.
    fn score_inverse_form(&self, state: &[f64], action: &[f64]) -> Result<Score> {
        ensure_len("policy action", self.action_dim(), action.len())?;
        let zeta = sub(action, &self.mean_action(state)?);
        // grad log pi0(zeta) = -zeta and d g^-1 / d theta = -J, so the score is J^T zeta
        self.mean_vjp(state, &zeta)
    }

    /// Score from the noise that produced the action, without inverting `g`:
    /// `-(d/dzeta log pi0(zeta)) (dg/dzeta)^-1 (dg/dtheta) - d/dtheta log det`.
    fn score_forward_form(&self, state: &[f64], zeta: &[f64]) -> Result<Score> {
        ensure_len("policy noise", self.action_dim(), zeta.len())?;
        // -(-zeta) * I^-1, pulled back through dg/dtheta = J
        self.mean_vjp(state, zeta)
    }
}

/// `pi(a | s, theta) = N(a; theta, I)`: `theta` is the action mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplePolicy {
    pub theta: Vec<f64>,
}

impl SimplePolicy {
    pub fn new(theta: Vec<f64>) -> Self {
        SimplePolicy { theta }
    }
}

impl Policy for SimplePolicy {
    fn action_dim(&self) -> usize {
        self.theta.len()
    }

    fn mean_action(&self, _state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.theta.clone())
    }

    fn mean_vjp(&self, _state: &[f64], upstream: &[f64]) -> Result<Score> {
        ensure_len("simple policy upstream", self.theta.len(), upstream.len())?;
        Ok(Score {
            theta: upstream.to_vec(),
            psi: None,
        })
    }

    fn mean_jvp(&self, _state: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        ensure_len("simple policy tangent", self.theta.len(), tangent.len())?;
        Ok(tangent.to_vec())
    }

    fn fisher_vector(&self, _state: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_len("simple policy tangent", self.theta.len(), v.len())?;
        Ok(v.to_vec())
    }
}

/// `a = MLP_psi([theta, s]) + zeta`, with `theta` a random network input.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPolicy<'a> {
    pub net: &'a Mlp,
    pub theta: Vec<f64>,
}

impl<'a> AuxPolicy<'a> {
    pub fn new(net: &'a Mlp, theta: Vec<f64>) -> Result<Self> {
        if theta.len() >= net.spec.input_dim() {
            return Err(Error::Invalid(format!(
                "auxiliary net input {} leaves no room for a state after theta ({})",
                net.spec.input_dim(),
                theta.len()
            )));
        }
        Ok(AuxPolicy { net, theta })
    }

    fn input(&self, state: &[f64]) -> Result<Vec<f64>> {
        ensure_len(
            "auxiliary policy state",
            self.net.spec.input_dim() - self.theta.len(),
            state.len(),
        )?;
        let mut x = self.theta.clone();
        x.extend_from_slice(state);
        Ok(x)
    }
}

impl Policy for AuxPolicy<'_> {
    fn action_dim(&self) -> usize {
        self.net.spec.output_dim()
    }

    fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(&self.input(state)?)
    }

    fn mean_vjp(&self, state: &[f64], upstream: &[f64]) -> Result<Score> {
        let (gp, gx) = self.net.backward(&self.input(state)?, upstream)?;
        Ok(Score {
            theta: gx[..self.theta.len()].to_vec(),
            psi: Some(gp.into_data()),
        })
    }

    fn mean_jvp(&self, state: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        ensure_len("auxiliary policy tangent", self.theta.len(), tangent.len())?;
        let mut dx = tangent.to_vec();
        dx.resize(self.net.spec.input_dim(), 0.0);
        let zeros = vec![0.0; self.net.params.len()];
        mlp_jvp(&self.net.spec, &self.net.params, &self.input(state)?, &zeros, Some(&dx))
    }
}

/// Which action model training uses on top of the sampled `theta`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyModel {
    Simple,
    Aux(Mlp),
}

impl PolicyModel {
    /// Mean action at `state` for the per-state parameter `theta`.
    pub fn mean(&self, state: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            PolicyModel::Simple => Ok(theta.to_vec()),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.mean_action(state),
        }
    }

    pub fn sample(&self, state: &[f64], theta: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            PolicyModel::Simple => SimplePolicy::new(theta.to_vec()).sample_action(state, rng),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.sample_action(state, rng),
        }
    }

    pub fn log_prob(&self, state: &[f64], theta: &[f64], action: &[f64]) -> Result<f64> {
        match self {
            PolicyModel::Simple => SimplePolicy::new(theta.to_vec()).log_prob(state, action),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.log_prob(state, action),
        }
    }

    /// `J^T upstream` where `J = d mean / d (theta, psi)`.
    pub fn mean_vjp(&self, state: &[f64], theta: &[f64], upstream: &[f64]) -> Result<Score> {
        match self {
            PolicyModel::Simple => SimplePolicy::new(theta.to_vec()).mean_vjp(state, upstream),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.mean_vjp(state, upstream),
        }
    }

    pub fn mean_jvp(&self, state: &[f64], theta: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        match self {
            PolicyModel::Simple => SimplePolicy::new(theta.to_vec()).mean_jvp(state, tangent),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.mean_jvp(state, tangent),
        }
    }

    pub fn fisher_vector(&self, state: &[f64], theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            PolicyModel::Simple => SimplePolicy::new(theta.to_vec()).fisher_vector(state, v),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.fisher_vector(state, v),
        }
    }

    pub fn score(&self, state: &[f64], theta: &[f64], action: &[f64]) -> Result<Score> {
        match self {
            PolicyModel::Simple => SimplePolicy::new(theta.to_vec()).score_inverse_form(state, action),
            PolicyModel::Aux(net) => AuxPolicy::new(net, theta.to_vec())?.score_inverse_form(state, action),
        }
    }

    pub fn aux_net(&self) -> Option<&Mlp> {
        match self {
            PolicyModel::Simple => None,
            PolicyModel::Aux(net) => Some(net),
        }
    }
}

/// Likelihood-ratio gradient of the auxiliary parameters,
/// `mean over trajectories of sum_t d log pi(a_t|s_t) / d psi * A_t`,
/// where `thetas[i][t]` is the parameter realized at step `t` of trajectory `i`.
pub fn aux_psi_gradient_with(
    net: &Mlp,
    trajs: &[Trajectory],
    thetas: &[Vec<Vec<f64>>],
    advantages: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(Error::Empty("trajectory set".into()));
    }
    ensure_len("theta sequences", trajs.len(), thetas.len())?;
    ensure_len("advantage sequences", trajs.len(), advantages.len())?;
    let mut grad = vec![0.0; net.params.len()];
    for ((traj, ths), advs) in trajs.iter().zip(thetas).zip(advantages) {
        ensure_len("advantages per step", traj.len(), advs.len())?;
        ensure_len("thetas per step", traj.len(), ths.len())?;
        for t in 0..traj.len() {
            let p = AuxPolicy::new(net, ths[t].clone())?;
            let sc = p.score_inverse_form(&traj.states[t], &traj.actions[t])?;
            axpy(advs[t], sc.psi.as_deref().unwrap(), &mut grad);
        }
    }
    let n = trajs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// [`aux_psi_gradient_with`] for a policy whose `theta` is fixed across steps.
pub fn aux_psi_gradient(p: &AuxPolicy<'_>, trajs: &[Trajectory], advantages: &[Vec<f64>]) -> Result<Vec<f64>> {
    let thetas: Vec<Vec<Vec<f64>>> = trajs.iter().map(|t| vec![p.theta.clone(); t.len()]).collect();
    aux_psi_gradient_with(p.net, trajs, &thetas, advantages)
}
