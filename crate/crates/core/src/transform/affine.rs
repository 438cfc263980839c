use super::InvertibleTransform;
use crate::error::{ensure_len, Error, Result};
use crate::numcore::{LayerShape, ShapedParams};

/// Mean-field affine map `theta = mu + sigma * xi` with `sigma = exp(log_sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
}

impl AffineTransform {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        ensure_len("affine log_sigma", mu.len(), log_sigma.len())?;
        if mu.is_empty() {
            return Err(Error::Invalid("affine transform needs dimension >= 1".into()));
        }
        Ok(AffineTransform { mu, log_sigma })
    }

    pub fn from_sigma(mu: Vec<f64>, sigma: &[f64]) -> Result<Self> {
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Invalid(format!("scale must be positive, got {s}")));
        }
        AffineTransform::new(mu, sigma.iter().map(|s| s.ln()).collect())
    }

    pub fn identity(dim: usize) -> Self {
        AffineTransform {
            mu: vec![0.0; dim],
            log_sigma: vec![0.0; dim],
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn log_sigma(&self) -> &[f64] {
        &self.log_sigma
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    pub fn manifest(dim: usize) -> Vec<LayerShape> {
        vec![LayerShape::new("mu", dim, 1), LayerShape::new("log_sigma", dim, 1)]
    }
}

impl InvertibleTransform for AffineTransform {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn state_dim(&self) -> Option<usize> {
        None
    }

    fn forward(&self, xi: &[f64], _state: Option<&[f64]>) -> Result<Vec<f64>> {
        ensure_len("affine forward noise", self.dim(), xi.len())?;
        Ok(self
            .mu
            .iter()
            .zip(&self.log_sigma)
            .zip(xi)
            .map(|((m, l), x)| m + l.exp() * x)
            .collect())
    }

    fn inverse(&self, theta: &[f64], _state: Option<&[f64]>) -> Result<Vec<f64>> {
        ensure_len("affine inverse input", self.dim(), theta.len())?;
        Ok(self
            .mu
            .iter()
            .zip(&self.log_sigma)
            .zip(theta)
            .map(|((m, l), t)| (t - m) / l.exp())
            .collect())
    }

    fn log_det_jacobian(&self, xi: &[f64], _state: Option<&[f64]>) -> Result<f64> {
        ensure_len("affine log-det noise", self.dim(), xi.len())?;
        Ok(self.log_sigma.iter().sum())
    }

    fn log_sigma_at(&self, _state: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(self.log_sigma.clone())
    }

    fn params(&self) -> ShapedParams {
        let mut data = self.mu.clone();
        data.extend_from_slice(&self.log_sigma);
        ShapedParams::new(Self::manifest(self.dim()), data).expect("affine manifest")
    }

    fn with_params(&self, params: &ShapedParams) -> Result<Self> {
        params.check_manifest(&Self::manifest(self.dim()))?;
        let d = self.dim();
        AffineTransform::new(params.data()[..d].to_vec(), params.data()[d..].to_vec())
    }

    fn forward_vjp(&self, xi: &[f64], _state: Option<&[f64]>, upstream: &[f64]) -> Result<Vec<f64>> {
        ensure_len("affine vjp noise", self.dim(), xi.len())?;
        ensure_len("affine vjp upstream", self.dim(), upstream.len())?;
        let mut g = upstream.to_vec();
        g.extend(
            upstream
                .iter()
                .zip(xi)
                .zip(&self.log_sigma)
                .map(|((u, x), l)| u * x * l.exp()),
        );
        Ok(g)
    }

    fn forward_jvp(&self, xi: &[f64], _state: Option<&[f64]>, tangent: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        ensure_len("affine jvp noise", d, xi.len())?;
        ensure_len("affine jvp tangent", 2 * d, tangent.len())?;
        Ok((0..d)
            .map(|i| tangent[i] + tangent[d + i] * xi[i] * self.log_sigma[i].exp())
            .collect())
    }

    fn log_det_grad(&self, _state: Option<&[f64]>) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        g.extend(std::iter::repeat_n(1.0, d));
        Ok(g)
    }
}
