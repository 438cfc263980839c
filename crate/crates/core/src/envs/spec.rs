use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kv;

const LQR_V1: &str = include_str!("../../env_specs/lqr-v1.txt");
const POINT_MASS_V1: &str = include_str!("../../env_specs/point_mass-v1.txt");
const PENDULUM_V1: &str = include_str!("../../env_specs/pendulum-v1.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Initial states are `init_scale * N(0, I)`.
    pub init_scale: f64,
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Invalid(format!("{name} must be square")));
    }
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
    if !sym || m.clone().cholesky().is_none() {
        return Err(Error::Invalid(format!("{name} must be symmetric positive definite")));
    }
    Ok(())
}

impl LqrSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        init_scale: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
            return Err(Error::Invalid(format!(
                "inconsistent LQR shapes: A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
                a.nrows(), a.ncols(), b.nrows(), b.ncols(), q.nrows(), q.ncols(), r.nrows(), r.ncols()
            )));
        }
        check_spd("Q", &q)?;
        check_spd("R", &r)?;
        if !(init_scale >= 0.0) {
            return Err(Error::Invalid("LQR init_scale must be >= 0".into()));
        }
        Ok(LqrSpec { a, b, q, r, init_scale })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let s = DVector::from_column_slice(s);
        let a = DVector::from_column_slice(a);
        (&self.a * s + &self.b * a).as_slice().to_vec()
    }

    pub fn state_cost(&self, s: &[f64]) -> f64 {
        let s = DVector::from_column_slice(s);
        (s.transpose() * &self.q * &s)[(0, 0)]
    }

    pub fn stage_cost(&self, s: &[f64], a: &[f64]) -> f64 {
        let av = DVector::from_column_slice(a);
        self.state_cost(s) + (av.transpose() * &self.r * &av)[(0, 0)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassSpec {
    pub dt: f64,
    pub max_speed: f64,
    pub bound: f64,
    pub goal_radius: f64,
    pub init_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSpec {
    pub g: f64,
    pub m: f64,
    pub l: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    Lqr(LqrSpec),
    PointMass(PointMassSpec),
    Pendulum(PendulumSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub horizon: usize,
    pub gamma: f64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind, horizon: usize, gamma: f64) -> Result<Self> {
        let spec = EnvSpec {
            kind,
            horizon,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::Lqr(_) => "lqr",
            EnvKind::PointMass(_) => "point_mass",
            EnvKind::Pendulum(_) => "pendulum",
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.kind {
            EnvKind::Lqr(l) => l.state_dim(),
            EnvKind::PointMass(_) | EnvKind::Pendulum(_) => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        match &self.kind {
            EnvKind::Lqr(l) => l.action_dim(),
            EnvKind::PointMass(_) => 2,
            EnvKind::Pendulum(_) => 1,
        }
    }

    pub fn lqr(&self) -> Option<&LqrSpec> {
        match &self.kind {
            EnvKind::Lqr(l) => Some(l),
            _ => None,
        }
    }

    /// The versioned built-in environment `name` (`lqr`, `point_mass`, `pendulum`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "lqr" => EnvSpec::from_text(LQR_V1),
            "point_mass" => EnvSpec::from_text(POINT_MASS_V1),
            "pendulum" => EnvSpec::from_text(PENDULUM_V1),
            other => Err(Error::Invalid(format!("unknown environment `{other}`"))),
        }
    }

    /// Parses an environment constants file (see `env_specs/`).
    pub fn from_text(text: &str) -> Result<Self> {
        let entries = kv::parse(text)?;
        let get = |key: &str| -> Result<&kv::Entry> {
            entries
                .iter()
                .find(|e| e.key == key)
                .ok_or_else(|| Error::Config {
                    line: 0,
                    msg: format!("environment file missing `{key}`"),
                })
        };
        let num = |key: &str| get(key).and_then(|e| e.f64());
        let name = get("name")?.value.clone();
        let state_dim: usize = get("state_dim")?.parse()?;
        let action_dim: usize = get("action_dim")?.parse()?;
        let horizon: usize = get("horizon")?.parse()?;
        let gamma = num("gamma")?;
        let kind = match name.as_str() {
            "lqr" => {
                let mat = |key: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
                    let e = get(key)?;
                    let m = e.matrix()?;
                    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                        return Err(e.err(format!("expected a {rows}x{cols} matrix")));
                    }
                    Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
                };
                EnvKind::Lqr(LqrSpec::new(
                    mat("a", state_dim, state_dim)?,
                    mat("b", state_dim, action_dim)?,
                    mat("q", state_dim, state_dim)?,
                    mat("r", action_dim, action_dim)?,
                    num("init_scale")?,
                )?)
            }
            "point_mass" => EnvKind::PointMass(PointMassSpec {
                dt: num("dt")?,
                max_speed: num("max_speed")?,
                bound: num("bound")?,
                goal_radius: num("goal_radius")?,
                init_range: num("init_range")?,
            }),
            "pendulum" => EnvKind::Pendulum(PendulumSpec {
                g: num("g")?,
                m: num("m")?,
                l: num("l")?,
                dt: num("dt")?,
                max_torque: num("max_torque")?,
                max_speed: num("max_speed")?,
            }),
            other => return Err(Error::Invalid(format!("unknown environment `{other}`"))),
        };
        let spec = EnvSpec::new(kind, horizon, gamma)?;
        if spec.state_dim() != state_dim || spec.action_dim() != action_dim {
            return Err(Error::Invalid(format!(
                "{name}: declared dims ({state_dim}, {action_dim}) do not match the dynamics"
            )));
        }
        Ok(spec)
    }
}
