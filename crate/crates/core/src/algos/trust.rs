//! Importance-weighted surrogates, policy KL and Fisher-vector products.

use crate::envs::Trajectory;
use crate::error::{ensure_len, Error, Result};
use crate::numcore::vecops::{axpy, dot, norm, sub};
use crate::numcore::RngStream;
use crate::policy::Policy;

/// Largest accepted `log(pi_new / pi_old)`.
pub const MAX_LOG_RATIO: f64 = 30.0;

/// `pi_new(a|s) / pi_old(a|s)`, rejecting overflow.
pub fn importance_ratio(log_new: f64, log_old: f64) -> Result<f64> {
    let lr = log_new - log_old;
    if !lr.is_finite() {
        return Err(Error::NonFinite("log importance ratio".into()));
    }
    if lr > MAX_LOG_RATIO {
        return Err(Error::RatioOverflow {
            log_ratio: lr,
            limit: MAX_LOG_RATIO,
        });
    }
    Ok(lr.exp())
}

fn check_batch(trajs: &[Trajectory], advantages: &[Vec<f64>]) -> Result<usize> {
    ensure_len("advantage sequences", trajs.len(), advantages.len())?;
    let mut n = 0;
    for (t, a) in trajs.iter().zip(advantages) {
        ensure_len("advantages per step", t.len(), a.len())?;
        n += t.len();
    }
    if n == 0 {
        return Err(Error::Empty("no steps in batch".into()));
    }
    Ok(n)
}

/// `L = mean over steps of pi_new(a|s) / pi_old(a|s) * A`.
pub fn surrogate_loss<P: Policy + ?Sized>(
    trajs: &[Trajectory],
    new: &P,
    old: &P,
    advantages: &[Vec<f64>],
) -> Result<f64> {
    let n = check_batch(trajs, advantages)?;
    let mut total = 0.0;
    for (t, advs) in trajs.iter().zip(advantages) {
        for k in 0..t.len() {
            let (s, a) = (&t.states[k], &t.actions[k]);
            total += importance_ratio(new.log_prob(s, a)?, old.log_prob(s, a)?)? * advs[k];
        }
    }
    Ok(total / n as f64)
}

/// `KL(pi_old(.|s) || pi_new(.|s))` for unit-covariance Gaussians: `||mean_new - mean_old||^2 / 2`.
pub fn gaussian_kl(mean_new: &[f64], mean_old: &[f64]) -> f64 {
    let d = sub(mean_new, mean_old);
    0.5 * dot(&d, &d)
}

/// State-averaged exact KL between the two policies over the visited states.
pub fn mean_policy_kl<P: Policy + ?Sized>(trajs: &[Trajectory], new: &P, old: &P) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for t in trajs {
        for s in &t.states {
            total += gaussian_kl(&new.mean_action(s)?, &old.mean_action(s)?);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no states in batch".into()));
    }
    Ok(total / n as f64)
}

/// `L(new) - lambda * mean KL(old, new)`.
pub fn ppo_objective<P: Policy + ?Sized>(
    trajs: &[Trajectory],
    new: &P,
    old: &P,
    advantages: &[Vec<f64>],
    lambda_kl: f64,
) -> Result<f64> {
    Ok(surrogate_loss(trajs, new, old, advantages)? - lambda_kl * mean_policy_kl(trajs, new, old)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherMode {
    /// Exact Hessian of the state-averaged policy KL.
    KlHessian,
    /// Monte-Carlo average of `score score^T` with `samples` actions per state.
    ScoreCovariance { samples: usize },
}

/// `(H + damping I) v` with a coordinate-wise standard error (zero in the exact mode).
#[derive(Debug, Clone, PartialEq)]
pub struct FisherProduct {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Running mean; stays bit-exact when every sample is identical.
fn running_mean(acc: &mut [f64], x: &[f64], count: usize) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += (v - *a) / count as f64;
    }
}

pub fn fisher_vector_product<P: Policy + ?Sized>(
    states: &[Vec<f64>],
    policy: &P,
    v: &[f64],
    mode: FisherMode,
    damping: f64,
    rng: &mut RngStream,
) -> Result<FisherProduct> {
    if states.is_empty() {
        return Err(Error::Empty("no states for the Fisher product".into()));
    }
    let dim = v.len();
    let mut mean = vec![0.0; dim];
    let mut se = vec![0.0; dim];
    match mode {
        FisherMode::KlHessian => {
            for (i, s) in states.iter().enumerate() {
                let hv = policy.fisher_vector(s, v)?;
                ensure_len("Fisher product", dim, hv.len())?;
                running_mean(&mut mean, &hv, i + 1);
            }
        }
        FisherMode::ScoreCovariance { samples } => {
            if samples == 0 {
                return Err(Error::Empty("score covariance needs samples".into()));
            }
            let mut sq = vec![0.0; dim];
            let mut count = 0;
            for s in states {
                for _ in 0..samples {
                    let (a, _) = policy.sample_action(s, rng)?;
                    let sc = policy.score_inverse_form(s, &a)?.theta;
                    ensure_len("score", dim, sc.len())?;
                    let w = dot(&sc, v);
                    let x: Vec<f64> = sc.iter().map(|g| g * w).collect();
                    count += 1;
                    let prev = mean.clone();
                    running_mean(&mut mean, &x, count);
                    for j in 0..dim {
                        sq[j] += (x[j] - prev[j]) * (x[j] - mean[j]);
                    }
                }
            }
            if count > 1 {
                for j in 0..dim {
                    se[j] = (sq[j] / (count - 1) as f64 / count as f64).sqrt();
                }
            }
        }
    }
    axpy(damping, v, &mut mean);
    Ok(FisherProduct { value: mean, std_error: se })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

/// Solves `A x = b` for symmetric positive-definite `A` given as a product.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], max_iters: usize, tol: f64) -> Result<CgResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * norm(b).max(f64::MIN_POSITIVE);
    if rr.sqrt() <= target {
        return Ok(CgResult {
            x,
            iterations: 0,
            converged: true,
            residual_norm: rr.sqrt(),
        });
    }
    for it in 1..=max_iters {
        let ap = apply(&p)?;
        ensure_len("CG product", b.len(), ap.len())?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Ok(CgResult {
                x,
                iterations: it,
                converged: false,
                residual_norm: rr.sqrt(),
            });
        }
        let step = rr / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(CgResult {
                x,
                iterations: it,
                converged: true,
                residual_norm: rr_new.sqrt(),
            });
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(CgResult {
        x,
        iterations: max_iters,
        converged: false,
        residual_norm: rr.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Mlp, MlpSpec};
    use crate::policy::{AuxPolicy, SimplePolicy};
    use std::f64::consts::PI;

    fn one_step(a: f64) -> Trajectory {
        Trajectory {
            states: vec![vec![]],
            actions: vec![vec![a]],
            rewards: vec![0.0],
            zetas: vec![vec![0.0]],
            final_state: vec![],
            terminated: false,
        }
    }

    #[test]
    fn surrogate_examples() {
        let trajs = vec![one_step(0.5), one_step(-1.0)];
        let advs = vec![vec![2.0], vec![-0.5]];
        let p = SimplePolicy::new(vec![0.3]);
        assert_eq!(surrogate_loss(&trajs, &p, &p, &advs).unwrap(), 0.75);
        let zeros = vec![vec![0.0], vec![0.0]];
        assert_eq!(surrogate_loss(&trajs, &SimplePolicy::new(vec![1.0]), &p, &zeros).unwrap(), 0.0);
        // N(1.3; 1, 1) / N(1.3; 0, 1) = exp(-0.045 + 0.845) = exp(0.8), times A = 3
        let l = surrogate_loss(&[one_step(1.3)], &SimplePolicy::new(vec![1.0]), &SimplePolicy::new(vec![0.0]), &[vec![3.0]])
            .unwrap();
        let n = |x: f64, m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * PI).sqrt();
        assert!((l - n(1.3, 1.0) / n(1.3, 0.0) * 3.0).abs() < 1e-12);
        assert!((l - 3.0 * 0.8f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn ratio_overflow_is_rejected() {
        let err = surrogate_loss(&[one_step(10.0)], &SimplePolicy::new(vec![10.0]), &SimplePolicy::new(vec![0.0]), &[vec![1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::RatioOverflow { .. }), "{err}");
    }

    #[test]
    fn kl_examples() {
        let trajs = vec![one_step(0.0)];
        let p = SimplePolicy::new(vec![0.4, -0.2]);
        assert_eq!(mean_policy_kl(&trajs, &p, &p).unwrap(), 0.0);
        assert_eq!(
            mean_policy_kl(&trajs, &SimplePolicy::new(vec![1.0]), &SimplePolicy::new(vec![0.0])).unwrap(),
            0.5
        );
    }

    #[test]
    fn quadratic_kl_matches_exact_for_aux_policy() {
        // exact KL vs 1/2 dtheta^T H dtheta with H = E_s[J^T J] at ||dtheta|| = 0.01
        let spec = MlpSpec::layered(2 + 2, &[5], 1, Activation::Tanh, Activation::Identity).unwrap();
        let net = Mlp::init(spec, &mut RngStream::new(4, 0));
        let mut rng = RngStream::new(4, 1);
        let states: Vec<Vec<f64>> = (0..10).map(|_| rng.normal_vec(2)).collect();
        let traj = Trajectory {
            states: states.clone(),
            actions: vec![vec![0.0]; 10],
            rewards: vec![0.0; 10],
            zetas: vec![vec![0.0]; 10],
            final_state: vec![0.0, 0.0],
            terminated: false,
        };
        let theta = rng.normal_vec(2);
        let dir = rng.normal_vec(2);
        let d: Vec<f64> = dir.iter().map(|v| v * 0.01 / norm(&dir)).collect();
        let old = AuxPolicy::new(&net, theta.clone()).unwrap();
        let new = AuxPolicy::new(&net, theta.iter().zip(&d).map(|(a, b)| a + b).collect()).unwrap();
        let exact = mean_policy_kl(&[traj], &new, &old).unwrap();
        let hv = fisher_vector_product(&states, &old, &d, FisherMode::KlHessian, 0.0, &mut rng).unwrap();
        let quad = 0.5 * dot(&d, &hv.value);
        assert!(((quad - exact) / exact).abs() < 0.01, "{quad} vs {exact}");
    }

    #[test]
    fn ppo_objective_examples() {
        let trajs = vec![one_step(1.3)];
        let advs = vec![vec![3.0]];
        let old = SimplePolicy::new(vec![0.0]);
        assert_eq!(ppo_objective(&trajs, &old, &old, &advs, 5.0).unwrap(), 3.0);
        let new = SimplePolicy::new(vec![1.0]);
        let j = ppo_objective(&trajs, &new, &old, &advs, 2.0).unwrap();
        assert!((j - (3.0 * 0.8f64.exp() - 2.0 * 0.5)).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let j = ppo_objective(&trajs, &new, &old, &advs, lambda).unwrap();
            assert!(j < prev);
            prev = j;
        }
    }

    #[test]
    fn fisher_examples() {
        let p = SimplePolicy::new(vec![0.2, -0.7, 1.1]);
        let states = vec![vec![]; 7];
        let v = vec![0.3, -1.7, 2.9];
        let mut rng = RngStream::new(0, 0);
        for damping in [0.0, 0.1, 1e-3] {
            let out = fisher_vector_product(&states, &p, &v, FisherMode::KlHessian, damping, &mut rng).unwrap();
            let expect: Vec<f64> = v.iter().map(|x| x + damping * x).collect();
            assert_eq!(out.value, expect);
        }
        let zero = fisher_vector_product(&states, &p, &[0.0; 3], FisherMode::KlHessian, 0.1, &mut rng).unwrap();
        assert_eq!(zero.value, vec![0.0; 3]);
    }

    #[test]
    fn score_covariance_agrees_with_exact() {
        let p = SimplePolicy::new(vec![0.5, -0.3]);
        let v = vec![1.0, -2.0];
        let mut rng = RngStream::new(12, 0);
        let mc = fisher_vector_product(&[vec![]], &p, &v, FisherMode::ScoreCovariance { samples: 100_000 }, 0.01, &mut rng)
            .unwrap();
        let exact = fisher_vector_product(&[vec![]], &p, &v, FisherMode::KlHessian, 0.01, &mut rng).unwrap();
        for j in 0..2 {
            assert!((mc.value[j] - exact.value[j]).abs() < 3.0 * mc.std_error[j], "{mc:?} vs {exact:?}");
        }
        assert!(dot(&v, &mc.value) >= 0.0);
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = [1.0, 2.0, 3.0];
        let apply = |x: &[f64]| Ok((0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect());
        let r = conjugate_gradient(apply, &b, 10, 1e-12).unwrap();
        assert!(r.converged && r.iterations <= 3);
        let ax: Vec<f64> = apply(&r.x).unwrap();
        assert!(norm(&sub(&ax, &b)) < 1e-10);
        let short = conjugate_gradient(apply, &b, 1, 1e-12).unwrap();
        assert!(!short.converged);
        let zero = conjugate_gradient(apply, &[0.0; 3], 5, 1e-12).unwrap();
        assert_eq!(zero.x, vec![0.0; 3]);
    }
}
