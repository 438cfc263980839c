//! Target log-densities for density fitting and the quadrature KL oracle.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{ensure_len, Error, Result};
use crate::transform::{pushforward_logpdf, BaseDensity, InvertibleTransform};

/// Unnormalized log-density with its gradient.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;
    fn log_prob(&self, x: &[f64]) -> Result<f64>;
    fn grad_log_prob(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// `N(mean, diag(std^2))`, normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        ensure_len("gaussian std", mean.len(), std.len())?;
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Invalid("gaussian std must be positive".into()));
        }
        Ok(DiagGaussian { mean, std })
    }
}

impl LogDensity for DiagGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_prob(&self, x: &[f64]) -> Result<f64> {
        ensure_len("gaussian point", self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| {
                let z = (x - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum())
    }

    fn grad_log_prob(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("gaussian point", self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| -(x - m) / (s * s))
            .collect())
    }
}

/// Finite mixture of diagonal Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub components: Vec<DiagGaussian>,
}

impl GaussianMixture {
    /// Weights are normalized to sum to one.
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components".into()));
        }
        ensure_len("mixture weights", components.len(), weights.len())?;
        let dim = components[0].dim();
        for c in &components {
            ensure_len("mixture component", dim, c.dim())?;
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(GaussianMixture {
            weights: weights.iter().map(|w| w / total).collect(),
            components,
        })
    }

    /// Component log-joint terms `log w_k + log N_k(x)`.
    fn terms(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| Ok(w.ln() + c.log_prob(x)?))
            .collect()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl LogDensity for GaussianMixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(&self.terms(x)?))
    }

    fn grad_log_prob(&self, x: &[f64]) -> Result<Vec<f64>> {
        let terms = self.terms(x)?;
        let lse = log_sum_exp(&terms);
        let mut g = vec![0.0; self.dim()];
        for (t, c) in terms.iter().zip(&self.components) {
            let resp = (t - lse).exp();
            for (gi, ci) in g.iter_mut().zip(c.grad_log_prob(x)?) {
                *gi += resp * ci;
            }
        }
        Ok(g)
    }
}

type LogFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A density given by a pair of callbacks.
pub struct FnDensity {
    dim: usize,
    log_prob: Box<LogFn>,
    grad: Box<GradFn>,
}

impl FnDensity {
    pub fn new(
        dim: usize,
        log_prob: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnDensity {
            dim,
            log_prob: Box::new(log_prob),
            grad: Box::new(grad),
        }
    }
}

impl fmt::Debug for FnDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDensity").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl LogDensity for FnDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_prob(&self, x: &[f64]) -> Result<f64> {
        ensure_len("density point", self.dim, x.len())?;
        Ok((self.log_prob)(x))
    }

    fn grad_log_prob(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("density point", self.dim, x.len())?;
        let g = (self.grad)(x);
        ensure_len("density gradient", self.dim, g.len())?;
        Ok(g)
    }
}

/// Composite Simpson rule on `[lo, hi]` with `n` (rounded up to even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) / 2 * 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// `KL(q || p_tempered)` for a one-dimensional transform and target, with
/// `p_tempered ∝ p^(1/alpha)` normalized by quadrature on `[lo, hi]`.
pub fn quadrature_kl_1d<T: InvertibleTransform + ?Sized>(
    t: &T,
    target: &dyn LogDensity,
    alpha: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<f64> {
    if t.dim() != 1 || target.dim() != 1 {
        return Err(Error::Invalid("quadrature KL is one-dimensional".into()));
    }
    let base = BaseDensity::standard_normal(1);
    let logq = |x: f64| pushforward_logpdf(t, &base, &[x], None).unwrap_or(f64::NEG_INFINITY);
    let logp = |x: f64| target.log_prob(&[x]).map(|v| v / alpha).unwrap_or(f64::NEG_INFINITY);
    let log_z = simpson(|x| logp(x).exp(), lo, hi, n).ln();
    let kl = simpson(
        |x| {
            let lq = logq(x);
            let q = lq.exp();
            if q == 0.0 {
                0.0
            } else {
                q * (lq - logp(x) + log_z)
            }
        },
        lo,
        hi,
        n,
    );
    if !kl.is_finite() {
        return Err(Error::NonFinite("quadrature KL".into()));
    }
    Ok(kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::finite_diff_grad;
    use crate::transform::AffineTransform;

    #[test]
    fn gaussian_density_normalizes() {
        let g = DiagGaussian::new(vec![0.5], vec![1.7]).unwrap();
        let z = simpson(|x| g.log_prob(&[x]).unwrap().exp(), -20.0, 20.0, 4000);
        assert!((z - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mixture_gradient_matches_fd() {
        let m = GaussianMixture::new(
            vec![0.7, 0.3],
            vec![
                DiagGaussian::new(vec![0.0, 1.0], vec![1.0, 0.5]).unwrap(),
                DiagGaussian::new(vec![2.0, -1.0], vec![0.8, 1.2]).unwrap(),
            ],
        )
        .unwrap();
        for x in [[0.3, -0.2], [1.5, 2.0], [-3.0, 0.7]] {
            let g = m.grad_log_prob(&x).unwrap();
            let fd = finite_diff_grad(|y| m.log_prob(y).unwrap(), &x, 1e-5).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn quadrature_kl_closed_form() {
        // KL(N(m1, s1^2) || N(m2, s2^2)) = ln(s2/s1) + (s1^2 + (m1 - m2)^2) / (2 s2^2) - 1/2
        let (m1, s1, m2, s2) = (0.4, 0.7, -0.5, 1.3);
        let q = AffineTransform::from_sigma(vec![m1], &[s1]).unwrap();
        let p = DiagGaussian::new(vec![m2], vec![s2]).unwrap();
        let kl = quadrature_kl_1d(&q, &p, 1.0, -15.0, 15.0, 6000).unwrap();
        let exact = (s2 / s1).ln() + (s1 * s1 + (m1 - m2).powi(2)) / (2.0 * s2 * s2) - 0.5;
        assert!((kl - exact).abs() < 1e-9, "{kl} vs {exact}");
        // an unnormalized target gives the same answer
        let shifted = FnDensity::new(1, move |x| p.log_prob(x).unwrap() + 3.0, |_| vec![0.0]);
        let kl2 = quadrature_kl_1d(&q, &shifted, 1.0, -15.0, 15.0, 6000).unwrap();
        assert!((kl2 - exact).abs() < 1e-9);
    }

    #[test]
    fn tempered_target() {
        // p^(1/alpha) for N(0, 1) is N(0, alpha)
        let q = AffineTransform::from_sigma(vec![0.0], &[2f64.sqrt()]).unwrap();
        let p = DiagGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let kl = quadrature_kl_1d(&q, &p, 2.0, -20.0, 20.0, 6000).unwrap();
        assert!(kl.abs() < 1e-9);
    }
}
