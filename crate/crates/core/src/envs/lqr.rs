//! Finite-horizon discounted Riccati recursion.
//!
//! Stage reward `-(s'Qs + a'Ra)` for `t < H` and terminal reward `-(s_H' Q s_H)`
//! paid inside the last stage (so it carries discount `gamma^(H-1)`). That is
//! the standard recursion started from `P_H = Q / gamma`:
//!
//! ```text
//! K_t = (R + g B'P B)^-1 g B'P A
//! P_t = Q + K_t' R K_t + g (A - B K_t)' P (A - B K_t)      (P = P_{t+1})
//! ```

use nalgebra::{DMatrix, DVector};

use super::{evaluate, EnvKind, EnvSpec, LqrSpec};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

/// Optimal feedback gains `K_0..K_{H-1}` (`a_t = -K_t s_t`).
pub fn lqr_riccati_gains(spec: &LqrSpec, gamma: f64, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    if !(gamma > 0.0 && gamma <= 1.0) || horizon == 0 {
        return Err(Error::Invalid("Riccati recursion needs gamma in (0, 1] and horizon >= 1".into()));
    }
    let (a, b, q, r) = (&spec.a, &spec.b, &spec.q, &spec.r);
    let mut p = q / gamma;
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let lhs = r + gamma * b.transpose() * &p * b;
        let rhs = gamma * b.transpose() * &p * a;
        let k = lhs
            .cholesky()
            .ok_or_else(|| Error::Invalid("R + g B'PB is not positive definite".into()))?
            .solve(&rhs);
        let closed = a - b * &k;
        p = q + k.transpose() * r * &k + gamma * closed.transpose() * &p * &closed;
        gains.push(k);
    }
    gains.reverse();
    Ok(gains)
}

/// Mean discounted return of the Riccati-optimal policy over `n_eval`
/// initial states drawn in order from `rng` (the same draws
/// [`evaluate`] uses for any other policy).
pub fn lqr_optimal_return(
    spec: &LqrSpec,
    gamma: f64,
    horizon: usize,
    n_eval: usize,
    rng: &RngStream,
) -> Result<f64> {
    if n_eval == 0 {
        return Err(Error::Empty("n_eval".into()));
    }
    let gains = lqr_riccati_gains(spec, gamma, horizon)?;
    let env = EnvSpec::new(EnvKind::Lqr(spec.clone()), horizon, gamma)?;
    let returns = evaluate(
        &env,
        |t, s| Ok((-(&gains[t] * DVector::from_column_slice(s))).as_slice().to_vec()),
        n_eval,
        rng,
    )?;
    Ok(returns.iter().sum::<f64>() / n_eval as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::env_reset;

    fn scalar(init_scale: f64) -> LqrSpec {
        let one = DMatrix::from_element(1, 1, 1.0);
        LqrSpec::new(one.clone(), one.clone(), one.clone(), one, init_scale).unwrap()
    }

    #[test]
    fn equilibrium_start_has_zero_return() {
        let r = lqr_optimal_return(&scalar(0.0), 0.99, 10, 5, &RngStream::new(0, 0)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn scalar_one_step_by_hand() {
        // min_a s^2 + a^2 + (s + a)^2  ->  a = -s/2, cost 1.5 s^2
        let spec = scalar(1.0);
        let gains = lqr_riccati_gains(&spec, 1.0, 1).unwrap();
        assert!((gains[0][(0, 0)] - 0.5).abs() < 1e-15);
        let rng = RngStream::new(4, 4);
        let n = 50;
        let env = EnvSpec::new(EnvKind::Lqr(spec.clone()), 1, 1.0).unwrap();
        let mut draws = rng.clone();
        let mean_s2: f64 = (0..n).map(|_| env_reset(&env, &mut draws)[0].powi(2)).sum::<f64>() / n as f64;
        let r = lqr_optimal_return(&spec, 1.0, 1, n, &rng).unwrap();
        assert!((r + 1.5 * mean_s2).abs() < 1e-12);
    }

    #[test]
    fn optimal_beats_zero_policy_on_shared_draws() {
        let env = EnvSpec::builtin("lqr").unwrap();
        let l = env.lqr().unwrap();
        let rng = RngStream::new(8, 1);
        let opt = lqr_optimal_return(l, env.gamma, env.horizon, 32, &rng).unwrap();
        let zero = evaluate(&env, |_, _| Ok(vec![0.0]), 32, &rng).unwrap();
        let zero = zero.iter().sum::<f64>() / 32.0;
        assert!(opt >= zero);
    }

    #[test]
    fn value_matches_closed_form_expectation() {
        // E[s0' P0 s0] = tr(P0) for s0 ~ N(0, I); check the MC estimate is close.
        let env = EnvSpec::builtin("lqr").unwrap();
        let l = env.lqr().unwrap();
        let r = lqr_optimal_return(l, env.gamma, env.horizon, 4000, &RngStream::new(1, 1)).unwrap();
        assert!((r + 12.7378).abs() < 0.6, "{r}");
    }
}
