//! Small fully-connected networks with exact reverse- and forward-mode derivatives.

use super::params::{LayerShape, ShapedParams};
use super::rng::RngStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer widths `[in, h1, ..., out]` and one activation per weight layer
/// (the last one is the output activation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Invalid(
                "an MLP needs an input and an output width".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::Invalid("MLP widths must be positive".into()));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::dim("MLP activations", widths.len() - 1, activations.len()));
        }
        Ok(MlpSpec {
            widths,
            activations,
        })
    }

    /// `in -> hidden... -> out` with `hidden_act` on hidden layers and `out_act` on the output.
    pub fn layered(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(out_act);
        MlpSpec::new(widths, acts)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn manifest(&self) -> Vec<LayerShape> {
        let mut m = Vec::with_capacity(2 * self.num_layers());
        for (i, w) in self.widths.windows(2).enumerate() {
            m.push(LayerShape::new(format!("l{i}.w"), w[1], w[0]));
            m.push(LayerShape::new(format!("l{i}.b"), w[1], 1));
        }
        m
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn check(&self, params: &ShapedParams, input: &[f64]) -> Result<()> {
        params.check_manifest(&self.manifest())?;
        if input.len() != self.input_dim() {
            return Err(Error::dim("layer l0 input", self.input_dim(), input.len()));
        }
        Ok(())
    }

    /// `(weight offset, bias offset)` of layer `i` within the flat vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let wo = off;
                let bo = off + w[0] * w[1];
                off = bo + w[1];
                (wo, bo)
            })
            .collect()
    }
}

/// Layer outputs, `acts[0]` being the input.
fn forward_trace(spec: &MlpSpec, p: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(spec.num_layers() + 1);
    acts.push(input.to_vec());
    for (i, (wo, bo)) in spec.offsets().into_iter().enumerate() {
        let (n_in, n_out) = (spec.widths[i], spec.widths[i + 1]);
        let x = &acts[i];
        let act = spec.activations[i];
        let y: Vec<f64> = (0..n_out)
            .map(|r| {
                let row = &p[wo + r * n_in..wo + (r + 1) * n_in];
                let z = p[bo + r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                act.apply(z)
            })
            .collect();
        acts.push(y);
    }
    acts
}

pub fn mlp_forward(spec: &MlpSpec, params: &ShapedParams, input: &[f64]) -> Result<Vec<f64>> {
    spec.check(params, input)?;
    let mut acts = forward_trace(spec, params.data(), input);
    Ok(acts.pop().unwrap())
}

/// Reverse-mode gradients of `output_grad · f(params, input)`.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &ShapedParams,
    input: &[f64],
    output_grad: &[f64],
) -> Result<(ShapedParams, Vec<f64>)> {
    spec.check(params, input)?;
    if output_grad.len() != spec.output_dim() {
        let last = spec.num_layers() - 1;
        return Err(Error::dim(
            format!("layer l{last} output gradient"),
            spec.output_dim(),
            output_grad.len(),
        ));
    }
    let p = params.data();
    let acts = forward_trace(spec, p, input);
    let mut grad = vec![0.0; p.len()];
    let offsets = spec.offsets();
    let mut upstream = output_grad.to_vec();
    for i in (0..spec.num_layers()).rev() {
        let (n_in, n_out) = (spec.widths[i], spec.widths[i + 1]);
        let (wo, bo) = offsets[i];
        let act = spec.activations[i];
        let y = &acts[i + 1];
        let x = &acts[i];
        let delta: Vec<f64> = (0..n_out)
            .map(|r| upstream[r] * act.deriv_from_output(y[r]))
            .collect();
        let mut down = vec![0.0; n_in];
        for r in 0..n_out {
            let d = delta[r];
            grad[bo + r] += d;
            let row = wo + r * n_in;
            for c in 0..n_in {
                grad[row + c] += d * x[c];
                down[c] += d * p[row + c];
            }
        }
        upstream = down;
    }
    Ok((params.with_data(grad)?, upstream))
}

/// Forward-mode directional derivative of the output along
/// `(param_tangent, input_tangent)`.
pub fn mlp_jvp(
    spec: &MlpSpec,
    params: &ShapedParams,
    input: &[f64],
    param_tangent: &[f64],
    input_tangent: Option<&[f64]>,
) -> Result<Vec<f64>> {
    spec.check(params, input)?;
    if param_tangent.len() != params.len() {
        return Err(Error::dim("parameter tangent", params.len(), param_tangent.len()));
    }
    let p = params.data();
    let acts = forward_trace(spec, p, input);
    let mut dx = match input_tangent {
        Some(t) => {
            if t.len() != spec.input_dim() {
                return Err(Error::dim("input tangent", spec.input_dim(), t.len()));
            }
            t.to_vec()
        }
        None => vec![0.0; spec.input_dim()],
    };
    for (i, (wo, bo)) in spec.offsets().into_iter().enumerate() {
        let (n_in, n_out) = (spec.widths[i], spec.widths[i + 1]);
        let x = &acts[i];
        let y = &acts[i + 1];
        let act = spec.activations[i];
        dx = (0..n_out)
            .map(|r| {
                let row = wo + r * n_in;
                let mut dz = param_tangent[bo + r];
                for c in 0..n_in {
                    dz += param_tangent[row + c] * x[c] + p[row + c] * dx[c];
                }
                act.deriv_from_output(y[r]) * dz
            })
            .collect();
    }
    Ok(dx)
}

/// An MLP together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ShapedParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: ShapedParams) -> Result<Self> {
        params.check_manifest(&spec.manifest())?;
        Ok(Mlp { spec, params })
    }

    /// Weights uniform in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`; zero biases.
    pub fn init(spec: MlpSpec, rng: &mut RngStream) -> Self {
        let manifest = spec.manifest();
        let mut data = Vec::with_capacity(spec.num_params());
        for w in spec.widths.windows(2) {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            data.extend((0..w[0] * w[1]).map(|_| rng.uniform(-a, a)));
            data.extend(std::iter::repeat_n(0.0, w[1]));
        }
        let params = ShapedParams::new(manifest, data).expect("manifest built from spec");
        Mlp { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = ShapedParams::zeros(spec.manifest());
        Mlp { spec, params }
    }

    /// Zeroes the output layer weights and sets its bias to `bias`.
    pub fn with_output_layer(mut self, bias: f64) -> Self {
        let last = self.spec.num_layers() - 1;
        self.params
            .block_mut(&format!("l{last}.w"))
            .expect("output weights")
            .fill(0.0);
        self.params
            .block_mut(&format!("l{last}.b"))
            .expect("output bias")
            .fill(bias);
        self
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.spec, &self.params, input)
    }

    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(ShapedParams, Vec<f64>)> {
        mlp_backward(&self.spec, &self.params, input, output_grad)
    }

    pub fn jvp(&self, input: &[f64], param_tangent: &[f64]) -> Result<Vec<f64>> {
        mlp_jvp(&self.spec, &self.params, input, param_tangent, None)
    }

    pub fn with_params(&self, data: Vec<f64>) -> Result<Self> {
        Ok(Mlp {
            spec: self.spec.clone(),
            params: self.params.with_data(data)?,
        })
    }
}
