//! Invertible parameter transformations `theta = h_phi(xi)` with exact
//! log-determinants, pushforward densities and the entropy identity
//! `H(q) = H(q0) + E[log det dh/dxi]`.
//!
//! Only affine families ship. New families implement [`InvertibleTransform`].

mod affine;
mod base;
mod conditioned;

pub use affine::AffineTransform;
pub use base::BaseDensity;
pub use conditioned::{ScaleMap, StateConditionedAffine};

use crate::error::{ensure_len, Error, Result};
use crate::numcore::vecops::mean_and_se;
use crate::numcore::{RngStream, ShapedParams};

/// An invertible map from base noise `xi` to parameters `theta`, optionally
/// conditioned on a state. Unconditioned transforms ignore a supplied state.
///
/// Gradients are with respect to the transform parameters `phi` in the
/// layout of [`params`](Self::params).
pub trait InvertibleTransform {
    fn dim(&self) -> usize;

    /// `Some(n)` when the transform must be given an `n`-dimensional state.
    fn state_dim(&self) -> Option<usize>;

    fn forward(&self, xi: &[f64], state: Option<&[f64]>) -> Result<Vec<f64>>;

    fn inverse(&self, theta: &[f64], state: Option<&[f64]>) -> Result<Vec<f64>>;

    /// `log |det d theta / d xi|` at `xi`.
    fn log_det_jacobian(&self, xi: &[f64], state: Option<&[f64]>) -> Result<f64>;

    /// Per-coordinate log scale (the affine families' Jacobian diagonal).
    fn log_sigma_at(&self, state: Option<&[f64]>) -> Result<Vec<f64>>;

    fn params(&self) -> ShapedParams;

    fn with_params(&self, params: &ShapedParams) -> Result<Self>
    where
        Self: Sized;

    /// `(d theta / d phi)^T upstream`.
    fn forward_vjp(&self, xi: &[f64], state: Option<&[f64]>, upstream: &[f64]) -> Result<Vec<f64>>;

    /// `(d theta / d phi) tangent`.
    fn forward_jvp(&self, xi: &[f64], state: Option<&[f64]>, tangent: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of the log-determinant with respect to `phi`. The affine
    /// families' log-determinant does not depend on `xi`.
    fn log_det_grad(&self, state: Option<&[f64]>) -> Result<Vec<f64>>;
}

/// The transform families available to training.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Affine(AffineTransform),
    StateConditioned(StateConditionedAffine),
}

macro_rules! dispatch {
    ($self:ident, $t:ident => $e:expr) => {
        match $self {
            Transform::Affine($t) => $e,
            Transform::StateConditioned($t) => $e,
        }
    };
}

impl InvertibleTransform for Transform {
    fn dim(&self) -> usize {
        dispatch!(self, t => t.dim())
    }
    fn state_dim(&self) -> Option<usize> {
        dispatch!(self, t => t.state_dim())
    }
    fn forward(&self, xi: &[f64], state: Option<&[f64]>) -> Result<Vec<f64>> {
        dispatch!(self, t => t.forward(xi, state))
    }
    fn inverse(&self, theta: &[f64], state: Option<&[f64]>) -> Result<Vec<f64>> {
        dispatch!(self, t => t.inverse(theta, state))
    }
    fn log_det_jacobian(&self, xi: &[f64], state: Option<&[f64]>) -> Result<f64> {
        dispatch!(self, t => t.log_det_jacobian(xi, state))
    }
    fn log_sigma_at(&self, state: Option<&[f64]>) -> Result<Vec<f64>> {
        dispatch!(self, t => t.log_sigma_at(state))
    }
    fn params(&self) -> ShapedParams {
        dispatch!(self, t => t.params())
    }
    fn with_params(&self, params: &ShapedParams) -> Result<Self> {
        Ok(match self {
            Transform::Affine(t) => Transform::Affine(t.with_params(params)?),
            Transform::StateConditioned(t) => Transform::StateConditioned(t.with_params(params)?),
        })
    }
    fn forward_vjp(&self, xi: &[f64], state: Option<&[f64]>, upstream: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, t => t.forward_vjp(xi, state, upstream))
    }
    fn forward_jvp(&self, xi: &[f64], state: Option<&[f64]>, tangent: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, t => t.forward_jvp(xi, state, tangent))
    }
    fn log_det_grad(&self, state: Option<&[f64]>) -> Result<Vec<f64>> {
        dispatch!(self, t => t.log_det_grad(state))
    }
}

impl From<AffineTransform> for Transform {
    fn from(t: AffineTransform) -> Self {
        Transform::Affine(t)
    }
}

impl From<StateConditionedAffine> for Transform {
    fn from(t: StateConditionedAffine) -> Self {
        Transform::StateConditioned(t)
    }
}

/// Monte-Carlo estimate of the pushforward entropy `H(q0) + E[log det]`
/// with its standard error.
pub fn entropy_of_pushforward<T: InvertibleTransform + ?Sized>(
    t: &T,
    base: &BaseDensity,
    n: usize,
    state: Option<&[f64]>,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Invalid(format!("entropy estimate needs n >= 2, got {n}")));
    }
    ensure_len("base density", t.dim(), base.dim())?;
    let log_dets = (0..n)
        .map(|_| t.log_det_jacobian(&base.sample(rng), state))
        .collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_and_se(&log_dets);
    Ok((base.entropy() + mean, se))
}

/// Change of variables: `log q(y) = log q0(h^{-1}(y)) - log|det dh/dxi|` at `h^{-1}(y)`.
pub fn pushforward_logpdf<T: InvertibleTransform + ?Sized>(
    t: &T,
    base: &BaseDensity,
    y: &[f64],
    state: Option<&[f64]>,
) -> Result<f64> {
    ensure_len("base density", t.dim(), base.dim())?;
    let xi = t.inverse(y, state)?;
    Ok(base.log_prob(&xi)? - t.log_det_jacobian(&xi, state)?)
}
