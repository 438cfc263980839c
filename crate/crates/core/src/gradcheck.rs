//! Finite-difference audits of the analytic gradients.
//!
//! Each suite draws `cases` random problems from its own seeded stream and
//! reports the worst relative error `|g - g_fd| / max(|g|, |g_fd|, floor)`.

use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::klengine::{kl_gradient_at, DiagGaussian, GaussianMixture, LogDensity, Target};
use crate::numcore::vecops::{dot, relative_error};
use crate::numcore::{finite_diff_grad, Activation, Mlp, MlpSpec, RngStream, ShapedParams};
use crate::policy::{aux_psi_gradient_with, AuxPolicy, Policy, SimplePolicy};
use crate::transform::{AffineTransform, InvertibleTransform, ScaleMap, StateConditionedAffine, Transform};

/// Below this norm, errors are measured in absolute terms.
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub cases: usize,
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            cases: 100,
            eps: 1e-5,
            tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tol: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.worst < self.tol
    }
}

pub const SUITES: [&str; 5] = ["mlp", "transform", "score", "aux_surrogate", "density_kl"];

type CaseFn = fn(&mut RngStream, f64) -> Result<f64>;

fn case_fn(name: &str) -> Option<(usize, CaseFn)> {
    let f: CaseFn = match name {
        "mlp" => mlp_case,
        "transform" => transform_case,
        "score" => score_case,
        "aux_surrogate" => aux_surrogate_case,
        "density_kl" => density_kl_case,
        _ => return None,
    };
    SUITES.iter().position(|s| *s == name).map(|i| (i, f))
}

pub fn run_suite(name: &str, cfg: &GradcheckConfig) -> Result<SuiteReport> {
    let (index, case) = case_fn(name).ok_or_else(|| Error::Invalid(format!("unknown gradcheck suite `{name}`")))?;
    if cfg.cases == 0 || !(cfg.eps > 0.0) {
        return Err(Error::Invalid("gradcheck needs cases > 0 and eps > 0".into()));
    }
    let mut worst = 0.0f64;
    for c in 0..cfg.cases {
        let mut rng = RngStream::from_path(cfg.seed, &[index as u64, c as u64]);
        let err = case(&mut rng, cfg.eps)?;
        // NaN must not hide behind max
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    Ok(SuiteReport {
        name: SUITES[index],
        cases: cfg.cases,
        worst,
        tol: cfg.tol,
    })
}

pub fn run_all(cfg: &GradcheckConfig) -> Result<Vec<SuiteReport>> {
    SUITES.iter().map(|s| run_suite(s, cfg)).collect()
}

fn below(rng: &mut RngStream, n: u64) -> usize {
    (rng.next_u64() % n) as usize
}

fn pick_activation(rng: &mut RngStream) -> Activation {
    [Activation::Tanh, Activation::Sigmoid, Activation::Identity][below(rng, 3)]
}

fn random_params(rng: &mut RngStream, manifest: Vec<crate::numcore::LayerShape>, scale: f64) -> Result<ShapedParams> {
    let n = manifest.iter().map(|l| l.size()).sum();
    ShapedParams::new(manifest, rng.normal_vec(n).into_iter().map(|v| scale * v).collect())
}

fn random_mlp(rng: &mut RngStream, n_in: usize, n_out: usize) -> Result<Mlp> {
    let depth = below(rng, 3);
    let mut widths = vec![n_in];
    widths.extend((0..depth).map(|_| 1 + below(rng, 5)));
    widths.push(n_out);
    let acts = (0..widths.len() - 1).map(|_| pick_activation(rng)).collect();
    let spec = MlpSpec::new(widths, acts)?;
    let params = random_params(rng, spec.manifest(), 0.7)?;
    Mlp::new(spec, params)
}

/// Turns a fallible scalar into a finite-difference probe; errors become NaN
/// and are reported by the difference routine.
fn probe<F: Fn(&[f64]) -> Result<f64>>(f: F) -> impl Fn(&[f64]) -> f64 {
    move |x| f(x).unwrap_or(f64::NAN)
}

fn mlp_case(rng: &mut RngStream, eps: f64) -> Result<f64> {
    let n_in = 1 + below(rng, 4);
    let n_out = 1 + below(rng, 3);
    let net = random_mlp(rng, n_in, n_out)?;
    let x = rng.normal_vec(n_in);
    let u = rng.normal_vec(n_out);
    let (gp, gx) = net.backward(&x, &u)?;
    let fp = finite_diff_grad(
        probe(|p| Ok(dot(&u, &net.with_params(p.to_vec())?.forward(&x)?))),
        net.params.data(),
        eps,
    )?;
    let fx = finite_diff_grad(probe(|xx| Ok(dot(&u, &net.forward(xx)?))), &x, eps)?;
    Ok(relative_error(gp.data(), &fp, FLOOR).max(relative_error(&gx, &fx, FLOOR)))
}

fn random_transform(rng: &mut RngStream) -> Result<Transform> {
    let dim = 1 + below(rng, 4);
    match below(rng, 3) {
        0 => Ok(AffineTransform::new(rng.normal_vec(dim), rng.normal_vec(dim).iter().map(|v| 0.5 * v).collect())?.into()),
        k => {
            let map = if k == 1 { ScaleMap::Exp } else { ScaleMap::Sigmoid };
            let sd = 1 + below(rng, 3);
            let hidden = if below(rng, 2) == 0 { vec![] } else { vec![1 + below(rng, 4)] };
            let t = StateConditionedAffine::init(sd, dim, &hidden, map, -0.5, rng)?;
            let p = random_params(rng, t.params().manifest().to_vec(), 0.5)?;
            Ok(t.with_params(&p)?.into())
        }
    }
}

fn transform_case(rng: &mut RngStream, eps: f64) -> Result<f64> {
    let t = random_transform(rng)?;
    let s = t.state_dim().map(|n| rng.normal_vec(n));
    let state = s.as_deref();
    let xi = rng.normal_vec(t.dim());
    let u = rng.normal_vec(t.dim());
    let v = rng.normal_vec(t.params().len());
    let phi = t.params();
    let at = |p: &[f64]| -> Result<Transform> { t.with_params(&phi.with_data(p.to_vec())?) };

    let ld = finite_diff_grad(probe(|p| at(p)?.log_det_jacobian(&xi, state)), phi.data(), eps)?;
    let e1 = relative_error(&t.log_det_grad(state)?, &ld, FLOOR);

    let vjp = finite_diff_grad(probe(|p| Ok(dot(&u, &at(p)?.forward(&xi, state)?))), phi.data(), eps)?;
    let e2 = relative_error(&t.forward_vjp(&xi, state, &u)?, &vjp, FLOOR);

    // directional derivative along v, one output coordinate at a time
    let jvp = t.forward_jvp(&xi, state, &v)?;
    let mut fd = Vec::with_capacity(t.dim());
    for k in 0..t.dim() {
        let along = finite_diff_grad(
            probe(|h| {
                let p: Vec<f64> = phi.data().iter().zip(&v).map(|(a, b)| a + h[0] * b).collect();
                Ok(at(&p)?.forward(&xi, state)?[k])
            }),
            &[0.0],
            eps,
        )?;
        fd.push(along[0]);
    }
    let e3 = relative_error(&jvp, &fd, FLOOR);
    Ok(e1.max(e2).max(e3))
}

fn score_case(rng: &mut RngStream, eps: f64) -> Result<f64> {
    let theta_dim = 1 + below(rng, 3);
    if below(rng, 2) == 0 {
        let theta = rng.normal_vec(theta_dim);
        let a = rng.normal_vec(theta_dim);
        let sc = SimplePolicy::new(theta.clone()).score_inverse_form(&[], &a)?;
        let fd = finite_diff_grad(probe(|th| SimplePolicy::new(th.to_vec()).log_prob(&[], &a)), &theta, eps)?;
        return Ok(relative_error(&sc.theta, &fd, FLOOR));
    }
    let sd = 1 + below(rng, 3);
    let ad = 1 + below(rng, 2);
    let net = random_mlp(rng, theta_dim + sd, ad)?;
    let theta = rng.normal_vec(theta_dim);
    let s = rng.normal_vec(sd);
    let a = rng.normal_vec(ad);
    let p = AuxPolicy::new(&net, theta.clone())?;
    let sc = p.score_inverse_form(&s, &a)?;
    let zeta: Vec<f64> = a.iter().zip(p.mean_action(&s)?).map(|(a, m)| a - m).collect();
    let fwd = p.score_forward_form(&s, &zeta)?;

    let ft = finite_diff_grad(probe(|th| AuxPolicy::new(&net, th.to_vec())?.log_prob(&s, &a)), &theta, eps)?;
    let fp = finite_diff_grad(
        probe(|q| {
            let n = net.with_params(q.to_vec())?;
            AuxPolicy::new(&n, theta.clone())?.log_prob(&s, &a)
        }),
        net.params.data(),
        eps,
    )?;
    let psi = sc.psi.as_deref().unwrap_or(&[]);
    let agree = relative_error(&sc.theta, &fwd.theta, FLOOR).max(relative_error(psi, fwd.psi.as_deref().unwrap_or(&[]), FLOOR));
    Ok(relative_error(&sc.theta, &ft, FLOOR).max(relative_error(psi, &fp, FLOOR)).max(agree))
}

fn aux_surrogate_case(rng: &mut RngStream, eps: f64) -> Result<f64> {
    let theta_dim = 1 + below(rng, 3);
    let sd = 1 + below(rng, 3);
    let ad = 1 + below(rng, 2);
    let net = random_mlp(rng, theta_dim + sd, ad)?;
    let n_traj = 1 + below(rng, 3);
    let mut trajs = Vec::new();
    let mut thetas = Vec::new();
    let mut advs = Vec::new();
    for _ in 0..n_traj {
        let len = 1 + below(rng, 4);
        let states: Vec<Vec<f64>> = (0..len).map(|_| rng.normal_vec(sd)).collect();
        let actions: Vec<Vec<f64>> = (0..len).map(|_| rng.normal_vec(ad)).collect();
        thetas.push((0..len).map(|_| rng.normal_vec(theta_dim)).collect::<Vec<_>>());
        advs.push(rng.normal_vec(len));
        trajs.push(Trajectory {
            final_state: rng.normal_vec(sd),
            zetas: vec![vec![0.0; ad]; len],
            rewards: vec![0.0; len],
            states,
            actions,
            terminated: false,
        });
    }
    let g = aux_psi_gradient_with(&net, &trajs, &thetas, &advs)?;
    // surrogate: mean over trajectories of sum_t A_t log pi(a_t | s_t, theta_t)
    let surrogate = |q: &[f64]| -> Result<f64> {
        let n = net.with_params(q.to_vec())?;
        let mut total = 0.0;
        for ((tr, ths), ad) in trajs.iter().zip(&thetas).zip(&advs) {
            for k in 0..tr.len() {
                total += ad[k] * AuxPolicy::new(&n, ths[k].clone())?.log_prob(&tr.states[k], &tr.actions[k])?;
            }
        }
        Ok(total / trajs.len() as f64)
    };
    let fd = finite_diff_grad(probe(surrogate), net.params.data(), eps)?;
    Ok(relative_error(&g, &fd, FLOOR))
}

fn random_target(rng: &mut RngStream, dim: usize) -> Result<Box<dyn LogDensity>> {
    let gauss = |rng: &mut RngStream| -> Result<DiagGaussian> {
        DiagGaussian::new(rng.normal_vec(dim), (0..dim).map(|_| rng.uniform(0.5, 2.0)).collect())
    };
    if below(rng, 2) == 0 {
        Ok(Box::new(gauss(rng)?))
    } else {
        let comps = vec![gauss(rng)?, gauss(rng)?];
        Ok(Box::new(GaussianMixture::new(vec![rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)], comps)?))
    }
}

fn density_kl_case(rng: &mut RngStream, eps: f64) -> Result<f64> {
    let dim = 1 + below(rng, 4);
    let t = AffineTransform::new(rng.normal_vec(dim), rng.normal_vec(dim).iter().map(|v| 0.5 * v).collect())?;
    let density: std::sync::Arc<dyn LogDensity> = random_target(rng, dim)?.into();
    let alpha = rng.uniform(0.5, 2.0);
    let n = 1 + below(rng, 8);
    let xis: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(dim)).collect();
    let target = Target::from_arc(density.clone(), alpha)?;
    let g = kl_gradient_at(&t, &target, &xis)?.grad_phi;
    // the sample KL up to the base entropy: mean_i [-log p(h(xi_i)) / alpha - log det]
    let phi = t.params();
    let kl = |p: &[f64]| -> Result<f64> {
        let tp = t.with_params(&phi.with_data(p.to_vec())?)?;
        let mut total = 0.0;
        for xi in &xis {
            total += -density.log_prob(&tp.forward(xi, None)?)? / alpha - tp.log_det_jacobian(xi, None)?;
        }
        Ok(total / n as f64)
    };
    let fd = finite_diff_grad(probe(kl), phi.data(), eps)?;
    Ok(relative_error(g.data(), &fd, FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_on_a_short_run() {
        let cfg = GradcheckConfig {
            cases: 20,
            ..GradcheckConfig::default()
        };
        for r in run_all(&cfg).unwrap() {
            assert!(r.passed(), "{} worst {:e}", r.name, r.worst);
        }
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_suite("nope", &GradcheckConfig::default()).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = GradcheckConfig {
            cases: 5,
            seed: 9,
            ..GradcheckConfig::default()
        };
        assert_eq!(run_suite("transform", &cfg).unwrap(), run_suite("transform", &cfg).unwrap());
    }
}
