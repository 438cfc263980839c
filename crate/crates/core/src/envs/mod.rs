//! Seedable desk-scale continuous-control environments, rollouts, and the
//! finite-horizon Riccati oracle for the LQR task.
//!
//! Environment constants live in versioned text files under `env_specs/`
//! (compiled in); [`EnvSpec::builtin`] parses them.

mod lqr;
mod spec;

pub use lqr::{lqr_optimal_return, lqr_riccati_gains};
pub use spec::{EnvKind, EnvSpec, LqrSpec, PendulumSpec, PointMassSpec};

use std::f64::consts::PI;

use crate::error::{ensure_len, Error, Result};
use crate::numcore::RngStream;

/// One episode: `states[t]`, `actions[t]`, `rewards[t]`, `zetas[t]` are
/// aligned per step; `final_state` is the state after the last action.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Action noise used to produce each action.
    pub zetas: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    /// True when the episode ended in an absorbing state before the horizon.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + gamma * acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub fn env_reset(spec: &EnvSpec, rng: &mut RngStream) -> Vec<f64> {
    match &spec.kind {
        EnvKind::Lqr(l) => rng
            .normal_vec(l.state_dim())
            .into_iter()
            .map(|v| l.init_scale * v)
            .collect(),
        EnvKind::PointMass(p) => (0..2).map(|_| rng.uniform(-p.init_range, p.init_range)).collect(),
        EnvKind::Pendulum(_) => vec![rng.uniform(-PI, PI), rng.uniform(-1.0, 1.0)],
    }
}

pub fn env_step(spec: &EnvSpec, state: &[f64], action: &[f64]) -> Result<Step> {
    ensure_len("env state", spec.state_dim(), state.len())?;
    ensure_len("env action", spec.action_dim(), action.len())?;
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    let (next_state, reward, done) = match &spec.kind {
        EnvKind::Lqr(l) => {
            let next = l.transition(state, action);
            (next, -l.stage_cost(state, action), false)
        }
        EnvKind::PointMass(p) => {
            let next: Vec<f64> = state
                .iter()
                .zip(action)
                .map(|(s, a)| (s + p.dt * a.clamp(-p.max_speed, p.max_speed)).clamp(-p.bound, p.bound))
                .collect();
            let dist2: f64 = next.iter().map(|v| v * v).sum();
            let done = dist2.sqrt() <= p.goal_radius;
            (next, -dist2, done)
        }
        EnvKind::Pendulum(p) => {
            let (th, w) = (state[0], state[1]);
            let u = action[0].clamp(-p.max_torque, p.max_torque);
            let reward = -(wrap_angle(th).powi(2) + 0.1 * w * w + 0.001 * u * u);
            let w2 = (w + (3.0 * p.g / (2.0 * p.l) * th.sin() + 3.0 / (p.m * p.l * p.l) * u) * p.dt)
                .clamp(-p.max_speed, p.max_speed);
            let th2 = wrap_angle(th + w2 * p.dt);
            (vec![th2, w2], reward, false)
        }
    };
    Ok(Step {
        next_state,
        reward,
        done,
    })
}

/// Reward paid once when an episode reaches the horizon (LQR terminal cost).
pub fn terminal_reward(spec: &EnvSpec, state: &[f64]) -> f64 {
    match &spec.kind {
        EnvKind::Lqr(l) => -l.state_cost(state),
        _ => 0.0,
    }
}

fn wrap_angle(th: f64) -> f64 {
    (th + PI).rem_euclid(2.0 * PI) - PI
}

/// Runs one episode. `act` maps `(state, rng)` to `(action, zeta)`; the
/// terminal reward, if any, is folded into the last step's reward.
pub fn rollout<F>(spec: &EnvSpec, mut act: F, rng: &mut RngStream) -> Result<Trajectory>
where
    F: FnMut(&[f64], &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let mut state = env_reset(spec, rng);
    let mut traj = Trajectory {
        states: Vec::with_capacity(spec.horizon),
        actions: Vec::with_capacity(spec.horizon),
        rewards: Vec::with_capacity(spec.horizon),
        zetas: Vec::with_capacity(spec.horizon),
        final_state: Vec::new(),
        terminated: false,
    };
    for _ in 0..spec.horizon {
        let (action, zeta) = act(&state, rng)?;
        let step = env_step(spec, &state, &action)?;
        if !step.reward.is_finite() {
            return Err(Error::NonFinite("reward".into()));
        }
        traj.states.push(std::mem::replace(&mut state, step.next_state));
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        traj.zetas.push(zeta);
        if step.done {
            traj.terminated = true;
            break;
        }
    }
    if !traj.terminated {
        let last = traj.rewards.len() - 1;
        traj.rewards[last] += terminal_reward(spec, &state);
    }
    traj.final_state = state;
    Ok(traj)
}

/// Discounted returns of a deterministic time-indexed policy over `n_eval`
/// episodes whose initial states are drawn in order from `rng`.
pub fn evaluate<F>(spec: &EnvSpec, mut policy: F, n_eval: usize, rng: &RngStream) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
{
    let mut rng = rng.clone();
    (0..n_eval)
        .map(|_| {
            let mut state = env_reset(spec, &mut rng);
            let mut ret = 0.0;
            let mut disc = 1.0;
            let mut done = false;
            for t in 0..spec.horizon {
                let a = policy(t, &state)?;
                let step = env_step(spec, &state, &a)?;
                ret += disc * step.reward;
                state = step.next_state;
                if step.done {
                    done = true;
                    break;
                }
                if t + 1 < spec.horizon {
                    disc *= spec.gamma;
                }
            }
            if !done {
                ret += disc * terminal_reward(spec, &state);
            }
            Ok(ret)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn lqr_env(a: DMatrix<f64>, b: DMatrix<f64>, scale: f64) -> EnvSpec {
        let n = a.nrows();
        let m = b.ncols();
        let l = LqrSpec::new(a, b, DMatrix::identity(n, n), DMatrix::identity(m, m) * 0.1, scale).unwrap();
        EnvSpec::new(EnvKind::Lqr(l), 5, 0.9).unwrap()
    }

    #[test]
    fn lqr_zero_scale_resets_to_origin() {
        let env = lqr_env(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 0.0);
        assert_eq!(env_reset(&env, &mut RngStream::new(0, 0)), vec![0.0, 0.0]);
    }

    #[test]
    fn reset_is_deterministic_per_stream() {
        let env = EnvSpec::builtin("pendulum").unwrap();
        let a = env_reset(&env, &mut RngStream::new(4, 2));
        let b = env_reset(&env, &mut RngStream::new(4, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn point_mass_reset_within_bounds() {
        let env = EnvSpec::builtin("point_mass").unwrap();
        let EnvKind::PointMass(p) = &env.kind else { unreachable!() };
        let mut rng = RngStream::new(1, 1);
        for _ in 0..1000 {
            let s = env_reset(&env, &mut rng);
            assert!(s.iter().all(|v| v.abs() <= p.init_range && v.abs() <= p.bound));
        }
    }

    #[test]
    fn lqr_step_examples() {
        let env = lqr_env(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 1.0);
        let st = env_step(&env, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(st.reward, 0.0);
        let st = env_step(&env, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(st.next_state, vec![1.0, 1.0]);
        // -(s'Qs + a'Ra) = -(1 + 0.1)
        assert!((st.reward + 1.1).abs() < 1e-15);
        assert!(env_step(&env, &[0.0, 0.0], &[f64::NAN, 0.0]).is_err());
        assert!(env_step(&env, &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn point_mass_goal_is_absorbing() {
        let env = EnvSpec::builtin("point_mass").unwrap();
        let st = env_step(&env, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(st.done);
        let st = env_step(&env, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(!st.done);
    }

    #[test]
    fn single_step_horizon() {
        let mut env = EnvSpec::builtin("pendulum").unwrap();
        env.horizon = 1;
        let t = rollout(&env, |_, _| Ok((vec![0.0], vec![0.0])), &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn zero_policy_rewards_follow_hand_iteration() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
        let l = LqrSpec::new(a, b, DMatrix::identity(2, 2), DMatrix::identity(1, 1) * 0.1, 1.0).unwrap();
        let env = EnvSpec::new(EnvKind::Lqr(l), 3, 0.99).unwrap();
        let mut rng = RngStream::new(3, 3);
        let s0 = env_reset(&env, &mut rng.clone());
        let t = rollout(&env, |_, _| Ok((vec![0.0], vec![0.0])), &mut rng).unwrap();
        // s_{t+1} = A s_t by hand
        let mut s = s0.clone();
        let mut expected = Vec::new();
        for _ in 0..3 {
            expected.push(-(s[0] * s[0] + s[1] * s[1]));
            s = vec![s[0] + 0.1 * s[1], 0.1 * s[0] + s[1]];
        }
        expected[2] -= s[0] * s[0] + s[1] * s[1];
        assert_eq!(t.states[0], s0);
        for (r, e) in t.rewards.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_streams_identical_trajectories() {
        let env = EnvSpec::builtin("lqr").unwrap();
        let pol = |_: &[f64], r: &mut RngStream| {
            let z = r.normal();
            Ok((vec![z], vec![z]))
        };
        let a = rollout(&env, pol, &mut RngStream::new(9, 9)).unwrap();
        let b = rollout(&env, pol, &mut RngStream::new(9, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounded_actions_keep_everything_finite() {
        let mut rng = RngStream::new(12, 0);
        for name in ["lqr", "point_mass", "pendulum"] {
            let env = EnvSpec::builtin(name).unwrap();
            for _ in 0..20 {
                let t = rollout(
                    &env,
                    |_, r| {
                        let a: Vec<f64> = (0..env.action_dim()).map(|_| r.uniform(-1e3, 1e3)).collect();
                        Ok((a.clone(), a))
                    },
                    &mut rng,
                )
                .unwrap();
                assert!(t.rewards.iter().all(|r| r.is_finite()));
                assert!(t.states.iter().flatten().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn evaluate_matches_rollout_returns() {
        let env = EnvSpec::builtin("lqr").unwrap();
        let rng = RngStream::new(2, 7);
        let returns = evaluate(&env, |_, s| Ok(vec![-(1.5 * s[0] + 1.7 * s[1])]), 3, &rng).unwrap();
        let mut r2 = rng.clone();
        for ret in returns {
            let t = rollout(&env, |s, _| Ok((vec![-(1.5 * s[0] + 1.7 * s[1])], vec![0.0])), &mut r2).unwrap();
            assert!((t.discounted_return(env.gamma) - ret).abs() < 1e-9 * ret.abs());
        }
    }
}
