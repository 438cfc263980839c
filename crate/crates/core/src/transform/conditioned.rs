use super::InvertibleTransform;
use crate::error::{ensure_len, Error, Result};
use crate::numcore::{sigmoid, Activation, Mlp, MlpSpec, RngStream, ShapedParams};

/// How the scale network's raw output `z` becomes a positive scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMap {
    /// `sigma = exp(z)`
    Exp,
    /// `sigma = sigmoid(z)`, bounded in `(0, 1)`.
    Sigmoid,
}

impl ScaleMap {
    fn log_sigma(self, z: f64) -> f64 {
        match self {
            ScaleMap::Exp => z,
            // log sigmoid(z) = -softplus(-z)
            ScaleMap::Sigmoid => -softplus(-z),
        }
    }

    /// `d log(sigma) / dz`
    fn dlog_sigma(self, z: f64) -> f64 {
        match self {
            ScaleMap::Exp => 1.0,
            ScaleMap::Sigmoid => 1.0 - sigmoid(z),
        }
    }

    /// Raw output that produces `log_sigma`.
    pub fn raw_for(self, log_sigma: f64) -> Result<f64> {
        match self {
            ScaleMap::Exp => Ok(log_sigma),
            ScaleMap::Sigmoid => {
                if log_sigma >= 0.0 {
                    return Err(Error::Invalid(
                        "sigmoid scale map needs an initial log sigma below 0".into(),
                    ));
                }
                let s = log_sigma.exp();
                Ok((s / (1.0 - s)).ln())
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScaleMap::Exp => "exp",
            ScaleMap::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exp" => Some(ScaleMap::Exp),
            "sigmoid" => Some(ScaleMap::Sigmoid),
            _ => None,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// State-conditioned affine map `theta = mean(s) + xi * sigma(s)`, both
/// networks mapping state to parameter dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct StateConditionedAffine {
    mean_net: Mlp,
    scale_net: Mlp,
    scale_map: ScaleMap,
}

impl StateConditionedAffine {
    pub fn new(mean_net: Mlp, scale_net: Mlp, scale_map: ScaleMap) -> Result<Self> {
        ensure_len(
            "scale net input (state dim)",
            mean_net.spec.input_dim(),
            scale_net.spec.input_dim(),
        )?;
        ensure_len(
            "scale net output (theta dim)",
            mean_net.spec.output_dim(),
            scale_net.spec.output_dim(),
        )?;
        Ok(StateConditionedAffine {
            mean_net,
            scale_net,
            scale_map,
        })
    }

    /// Both nets get scaled-uniform hidden layers and zero output weights, so
    /// at the start `mean(s) = 0` and `log sigma(s) = init_log_sigma` everywhere.
    pub fn init(
        state_dim: usize,
        theta_dim: usize,
        hidden: &[usize],
        scale_map: ScaleMap,
        init_log_sigma: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let spec = MlpSpec::layered(state_dim, hidden, theta_dim, Activation::Tanh, Activation::Identity)?;
        let mean_net = Mlp::init(spec.clone(), rng).with_output_layer(0.0);
        let scale_net = Mlp::init(spec, rng).with_output_layer(scale_map.raw_for(init_log_sigma)?);
        StateConditionedAffine::new(mean_net, scale_net, scale_map)
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean_net
    }

    pub fn scale_net(&self) -> &Mlp {
        &self.scale_net
    }

    pub fn scale_map(&self) -> ScaleMap {
        self.scale_map
    }

    fn state<'a>(&self, state: Option<&'a [f64]>) -> Result<&'a [f64]> {
        let s = state.ok_or_else(|| {
            Error::Invalid("state-conditioned transform requires a state".into())
        })?;
        ensure_len("transform state", self.mean_net.spec.input_dim(), s.len())?;
        Ok(s)
    }

    fn raw_scale(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.scale_net.forward(s)
    }

    fn n_mean(&self) -> usize {
        self.mean_net.params.len()
    }
}

impl InvertibleTransform for StateConditionedAffine {
    fn dim(&self) -> usize {
        self.mean_net.spec.output_dim()
    }

    fn state_dim(&self) -> Option<usize> {
        Some(self.mean_net.spec.input_dim())
    }

    fn forward(&self, xi: &[f64], state: Option<&[f64]>) -> Result<Vec<f64>> {
        let s = self.state(state)?;
        ensure_len("conditioned forward noise", self.dim(), xi.len())?;
        let m = self.mean_net.forward(s)?;
        let z = self.raw_scale(s)?;
        Ok(m.iter()
            .zip(&z)
            .zip(xi)
            .map(|((m, z), x)| m + self.scale_map.log_sigma(*z).exp() * x)
            .collect())
    }

    fn inverse(&self, theta: &[f64], state: Option<&[f64]>) -> Result<Vec<f64>> {
        let s = self.state(state)?;
        ensure_len("conditioned inverse input", self.dim(), theta.len())?;
        let m = self.mean_net.forward(s)?;
        let z = self.raw_scale(s)?;
        Ok(theta
            .iter()
            .zip(&m)
            .zip(&z)
            .map(|((t, m), z)| (t - m) / self.scale_map.log_sigma(*z).exp())
            .collect())
    }

    fn log_det_jacobian(&self, xi: &[f64], state: Option<&[f64]>) -> Result<f64> {
        ensure_len("conditioned log-det noise", self.dim(), xi.len())?;
        Ok(self.log_sigma_at(state)?.iter().sum())
    }

    fn log_sigma_at(&self, state: Option<&[f64]>) -> Result<Vec<f64>> {
        let s = self.state(state)?;
        Ok(self
            .raw_scale(s)?
            .into_iter()
            .map(|z| self.scale_map.log_sigma(z))
            .collect())
    }

    fn params(&self) -> ShapedParams {
        ShapedParams::concat(&[("mean", &self.mean_net.params), ("scale", &self.scale_net.params)])
    }

    fn with_params(&self, params: &ShapedParams) -> Result<Self> {
        params.check_manifest(self.params().manifest())?;
        let n = self.n_mean();
        Ok(StateConditionedAffine {
            mean_net: self.mean_net.with_params(params.data()[..n].to_vec())?,
            scale_net: self.scale_net.with_params(params.data()[n..].to_vec())?,
            scale_map: self.scale_map,
        })
    }

    fn forward_vjp(&self, xi: &[f64], state: Option<&[f64]>, upstream: &[f64]) -> Result<Vec<f64>> {
        let s = self.state(state)?;
        ensure_len("conditioned vjp noise", self.dim(), xi.len())?;
        ensure_len("conditioned vjp upstream", self.dim(), upstream.len())?;
        let (gm, _) = self.mean_net.backward(s, upstream)?;
        let z = self.raw_scale(s)?;
        // d sigma / dz = sigma * dlog(sigma)/dz
        let gz: Vec<f64> = upstream
            .iter()
            .zip(xi)
            .zip(&z)
            .map(|((u, x), z)| {
                u * x * self.scale_map.log_sigma(*z).exp() * self.scale_map.dlog_sigma(*z)
            })
            .collect();
        let (gs, _) = self.scale_net.backward(s, &gz)?;
        let mut g = gm.into_data();
        g.extend_from_slice(gs.data());
        Ok(g)
    }

    fn forward_jvp(&self, xi: &[f64], state: Option<&[f64]>, tangent: &[f64]) -> Result<Vec<f64>> {
        let s = self.state(state)?;
        ensure_len("conditioned jvp noise", self.dim(), xi.len())?;
        ensure_len("conditioned jvp tangent", self.params().len(), tangent.len())?;
        let n = self.n_mean();
        let dm = self.mean_net.jvp(s, &tangent[..n])?;
        let dz = self.scale_net.jvp(s, &tangent[n..])?;
        let z = self.raw_scale(s)?;
        Ok((0..self.dim())
            .map(|i| {
                let sig = self.scale_map.log_sigma(z[i]).exp();
                dm[i] + xi[i] * sig * self.scale_map.dlog_sigma(z[i]) * dz[i]
            })
            .collect())
    }

    fn log_det_grad(&self, state: Option<&[f64]>) -> Result<Vec<f64>> {
        let s = self.state(state)?;
        let z = self.raw_scale(s)?;
        let gz: Vec<f64> = z.iter().map(|z| self.scale_map.dlog_sigma(*z)).collect();
        let (gs, _) = self.scale_net.backward(s, &gz)?;
        let mut g = vec![0.0; self.n_mean()];
        g.extend_from_slice(gs.data());
        Ok(g)
    }
}
