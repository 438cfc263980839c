//! Run configuration files: `key = value` lines with `[section]` headers.
//!
//! Top-level keys are `command`, `algorithm`, `env`, `seed` (required),
//! `iterations`, `n_particles`, `rollouts`, `n_eval`, `reward_scale`, `out` and
//! `checkpoint`. Sections: `[env]`, `[schedule]`, `[optimizer]`, `[trpo]`,
//! `[ppo]`, `[transform]`, `[policy]`, `[advantage]`, `[baseline]`,
//! `[density]`, `[gradcheck]`. Keys that the chosen command or algorithm
//! would ignore are rejected, as are unknown keys.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use crate::algos::{
    Algorithm, OptimizerConfig, OptimizerKind, PolicyKind, PpoConfig, TrainConfig, TransformConfig, TransformKind,
    TrpoConfig,
};
use crate::algos::FisherMode;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::estimators::{AdvantageMode, TdForm};
use crate::gradcheck::GradcheckConfig;
use crate::klengine::{DiagGaussian, FitConfig, GaussianMixture, LogDensity, ScheduleMode, TemperatureSchedule};
use crate::kv::{self, Entry};
use crate::transform::ScaleMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    FitDensity,
    Gradcheck,
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::FitDensity => "fit-density",
            Command::Gradcheck => "gradcheck",
            Command::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Command::Train),
            "fit-density" => Some(Command::FitDensity),
            "gradcheck" => Some(Command::Gradcheck),
            "eval" => Some(Command::Eval),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityTarget {
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// One-dimensional mixture of normals.
    Mixture { weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64> },
}

impl DensityTarget {
    pub fn dim(&self) -> usize {
        match self {
            DensityTarget::Gaussian { mean, .. } => mean.len(),
            DensityTarget::Mixture { .. } => 1,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LogDensity>> {
        Ok(match self {
            DensityTarget::Gaussian { mean, std } => Arc::new(DiagGaussian::new(mean.clone(), std.clone())?),
            DensityTarget::Mixture { weights, means, stds } => {
                if means.len() != weights.len() || stds.len() != weights.len() {
                    return Err(Error::Invalid("mixture weights, means and stds differ in length".into()));
                }
                let comps = means
                    .iter()
                    .zip(stds)
                    .map(|(m, s)| DiagGaussian::new(vec![*m], vec![*s]))
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(GaussianMixture::new(weights.clone(), comps)?)
            }
        })
    }
}

/// Settings of the `fit-density` command; the fitted transform is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRun {
    pub target: DensityTarget,
    pub alpha: f64,
    pub init_log_sigma: f64,
    pub fit: FitConfig,
}

impl Default for DensityRun {
    fn default() -> Self {
        DensityRun {
            target: DensityTarget::Gaussian {
                mean: vec![1.0],
                std: vec![2.0],
            },
            alpha: 1.0,
            init_log_sigma: 0.0,
            fit: FitConfig {
                steps: 3000,
                step_size: 0.05,
                n_particles: 16,
                final_lr_fraction: 0.01,
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Also carries the seed, shared by every command.
    pub train: TrainConfig,
    pub density: DensityRun,
    pub gradcheck: GradcheckConfig,
    pub out: PathBuf,
    /// Checkpoint read by `eval`; defaults to the one `train` writes into `out`.
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    /// Documented defaults for the given command, algorithm and environment.
    pub fn new(command: Command, algorithm: &str, env: &str, seed: u64) -> Result<Self> {
        let algorithm = parse_algorithm(algorithm)
            .ok_or_else(|| Error::Invalid(format!("unknown algorithm `{algorithm}`")))?;
        let train = TrainConfig::new(EnvSpec::builtin(env)?, algorithm, seed);
        Ok(RunConfig {
            command,
            train,
            density: DensityRun::default(),
            gradcheck: GradcheckConfig {
                seed,
                ..GradcheckConfig::default()
            },
            out: default_out(command, seed),
            checkpoint: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.gradcheck.seed = seed;
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

fn default_out(command: Command, seed: u64) -> PathBuf {
    PathBuf::from(format!("runs/{}-seed{seed}", command.name()))
}

fn parse_algorithm(s: &str) -> Option<Algorithm> {
    match s {
        "vpg" => Some(Algorithm::Vpg),
        "trpo" => Some(Algorithm::Trpo(TrpoConfig::default())),
        "ppo" => Some(Algorithm::Ppo(PpoConfig::default())),
        _ => None,
    }
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "",
        &[
            "command",
            "algorithm",
            "env",
            "seed",
            "iterations",
            "n_particles",
            "rollouts",
            "n_eval",
            "reward_scale",
            "out",
            "checkpoint",
        ],
    ),
    ("env", &["horizon", "gamma"]),
    ("schedule", &["mode", "alpha0", "decay", "floor"]),
    ("optimizer", &["kind", "step_size", "momentum", "beta2", "eps", "clip_norm", "lr_decay"]),
    ("trpo", &["delta", "cg_iters", "cg_damping", "backtrack_steps", "fisher", "fisher_samples"]),
    ("ppo", &["lambda_kl", "inner_epochs"]),
    ("transform", &["kind", "hidden", "scale_map", "init_log_sigma"]),
    ("policy", &["kind", "theta_dim", "hidden", "psi_step_size"]),
    ("advantage", &["mode", "gamma", "lambda", "normalize", "td_form"]),
    ("baseline", &["hidden", "epochs", "step_size"]),
    (
        "density",
        &[
            "target",
            "mean",
            "std",
            "weights",
            "means",
            "stds",
            "alpha",
            "init_log_sigma",
            "steps",
            "step_size",
            "n_particles",
            "final_lr_fraction",
            "momentum",
            "kl_samples",
        ],
    ),
    ("gradcheck", &["cases", "eps", "tol"]),
];

/// Entries indexed by `(section, key)`, remembering which ones were read.
struct Table<'a> {
    map: HashMap<(&'a str, &'a str), (&'a Entry, Cell<bool>)>,
}

impl<'a> Table<'a> {
    fn new(entries: &'a [Entry]) -> Result<Self> {
        let mut map = HashMap::new();
        for e in entries {
            let known = KEYS
                .iter()
                .find(|(s, _)| *s == e.section)
                .is_some_and(|(_, keys)| keys.contains(&e.key.as_str()));
            if !known {
                return Err(e.err("unknown key"));
            }
            if map.insert((e.section.as_str(), e.key.as_str()), (e, Cell::new(false))).is_some() {
                return Err(e.err("duplicate key"));
            }
        }
        Ok(Table { map })
    }

    fn get(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.map.get(&(section, key)).map(|(e, used)| {
            used.set(true);
            *e
        })
    }

    fn value<T>(&self, section: &str, key: &str, default: T, f: impl Fn(&Entry) -> Result<T>) -> Result<T> {
        match self.get(section, key) {
            Some(e) => f(e),
            None => Ok(default),
        }
    }

    /// The first entry (in file order) that no lookup consumed.
    fn first_unused(&self) -> Option<&'a Entry> {
        self.map
            .values()
            .filter(|(_, used)| !used.get())
            .map(|(e, _)| *e)
            .min_by_key(|e| e.line)
    }
}

fn checked<T: Copy>(e: &Entry, v: T, ok: bool, constraint: &str) -> Result<T> {
    if ok {
        Ok(v)
    } else {
        Err(e.err(format!("must be {constraint}, got `{}`", e.value)))
    }
}

fn positive(e: &Entry) -> Result<f64> {
    let v = e.f64()?;
    checked(e, v, v > 0.0 && v.is_finite(), "positive")
}

fn finite(e: &Entry) -> Result<f64> {
    let v = e.f64()?;
    checked(e, v, v.is_finite(), "finite")
}

fn nonneg(e: &Entry) -> Result<f64> {
    let v = e.f64()?;
    checked(e, v, v >= 0.0 && v.is_finite(), "non-negative")
}

/// `(0, 1]`
fn unit_rate(e: &Entry) -> Result<f64> {
    let v = e.f64()?;
    checked(e, v, v > 0.0 && v <= 1.0, "in (0, 1]")
}

/// `[0, 1)`
fn unit_open(e: &Entry) -> Result<f64> {
    let v = e.f64()?;
    checked(e, v, (0.0..1.0).contains(&v), "in [0, 1)")
}

fn count(e: &Entry) -> Result<usize> {
    e.parse()
}

fn count_pos(e: &Entry) -> Result<usize> {
    let v: usize = e.parse()?;
    checked(e, v, v > 0, "a positive integer")
}

fn word<T>(e: &Entry, parse: impl Fn(&str) -> Option<T>, choices: &str) -> Result<T> {
    parse(&e.value).ok_or_else(|| e.err(format!("expected one of {choices}, got `{}`", e.value)))
}

fn positive_list(e: &Entry) -> Result<Vec<f64>> {
    let v = e.f64_list()?;
    if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
        Ok(v)
    } else {
        Err(e.err("entries must be positive"))
    }
}

fn finite_list(e: &Entry) -> Result<Vec<f64>> {
    let v = e.f64_list()?;
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(e.err("entries must be finite"))
    }
}

/// Parses and validates a run configuration, applying defaults for every
/// key not given.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_as(text, None)
}

/// As [`parse_config`], with `command` (when given) replacing the file's
/// `command` key.
pub fn parse_config_as(text: &str, command: Option<Command>) -> Result<RunConfig> {
    let entries = kv::parse(text)?;
    let t = Table::new(&entries)?;

    let seed: u64 = match t.get("", "seed") {
        Some(e) => e.parse()?,
        None => {
            return Err(Error::Config {
                line: 0,
                msg: "missing required key `seed`".into(),
            })
        }
    };
    let in_file = t.value("", "command", Command::Train, |e| {
        word(e, Command::parse, "train, fit-density, gradcheck, eval")
    })?;
    let command = command.unwrap_or(in_file);
    let mut cfg = RunConfig::new(command, "vpg", "lqr", seed)?;
    cfg.out = t.value("", "out", cfg.out.clone(), |e| Ok(PathBuf::from(&e.value)))?;

    match command {
        Command::Train | Command::Eval => parse_training(&t, &mut cfg)?,
        Command::FitDensity => parse_density(&t, &mut cfg.density)?,
        Command::Gradcheck => {
            let g = &mut cfg.gradcheck;
            g.cases = t.value("gradcheck", "cases", g.cases, count_pos)?;
            g.eps = t.value("gradcheck", "eps", g.eps, positive)?;
            g.tol = t.value("gradcheck", "tol", g.tol, positive)?;
        }
    }
    if command == Command::Eval {
        cfg.checkpoint = t.value("", "checkpoint", None, |e| Ok(Some(PathBuf::from(&e.value))))?;
    }
    if let Some(e) = t.first_unused() {
        return Err(e.err(format!("not used by the `{}` command with this configuration", command.name())));
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn parse_training(t: &Table<'_>, cfg: &mut RunConfig) -> Result<()> {
    let mut algorithm = t.value("", "algorithm", Algorithm::Vpg, |e| word(e, parse_algorithm, "vpg, trpo, ppo"))?;
    let env_name = t.value("", "env", "lqr".to_string(), |e| Ok(e.value.clone()))?;
    let mut env = EnvSpec::builtin(&env_name).map_err(|err| match t.get("", "env") {
        Some(e) => e.err(err),
        None => err,
    })?;
    env.horizon = t.value("env", "horizon", env.horizon, count_pos)?;
    env.gamma = t.value("env", "gamma", env.gamma, unit_rate)?;

    match &mut algorithm {
        Algorithm::Vpg => {}
        Algorithm::Trpo(c) => {
            c.delta = t.value("trpo", "delta", c.delta, positive)?;
            c.cg_iters = t.value("trpo", "cg_iters", c.cg_iters, count_pos)?;
            c.cg_damping = t.value("trpo", "cg_damping", c.cg_damping, positive)?;
            c.backtrack_steps = t.value("trpo", "backtrack_steps", c.backtrack_steps, count)?;
            let covariance = t.value("trpo", "fisher", false, |e| {
                word(
                    e,
                    |s| match s {
                        "kl_hessian" => Some(false),
                        "score_covariance" => Some(true),
                        _ => None,
                    },
                    "kl_hessian, score_covariance",
                )
            })?;
            if covariance {
                let samples = t.value("trpo", "fisher_samples", 64, count_pos)?;
                c.fisher_mode = FisherMode::ScoreCovariance { samples };
            }
        }
        Algorithm::Ppo(c) => {
            c.lambda_kl = t.value("ppo", "lambda_kl", c.lambda_kl, positive)?;
            c.inner_epochs = t.value("ppo", "inner_epochs", c.inner_epochs, count_pos)?;
        }
    }

    let mut tc = TrainConfig::new(env, algorithm, cfg.seed());
    tc.iterations = t.value("", "iterations", tc.iterations, count)?;
    tc.n_particles = t.value("", "n_particles", tc.n_particles, count_pos)?;
    tc.rollouts_per_particle = t.value("", "rollouts", tc.rollouts_per_particle, count_pos)?;
    tc.n_eval = t.value("", "n_eval", tc.n_eval, count_pos)?;
    tc.reward_scale = t.value("", "reward_scale", tc.reward_scale, finite)?;

    let s = &mut tc.schedule;
    let mode = t.value("schedule", "mode", s.mode, |e| {
        word(
            e,
            |v| match v {
                "constant" => Some(ScheduleMode::Constant),
                "geometric" => Some(ScheduleMode::Geometric),
                _ => None,
            },
            "constant, geometric",
        )
    })?;
    let alpha0 = t.value("schedule", "alpha0", s.alpha0, positive)?;
    *s = match mode {
        ScheduleMode::Constant => TemperatureSchedule::constant(alpha0),
        ScheduleMode::Geometric => TemperatureSchedule::geometric(
            alpha0,
            t.value("schedule", "decay", s.decay, unit_rate)?,
            t.value("schedule", "floor", s.floor, positive)?,
        ),
    };

    let o = &mut tc.optimizer;
    o.kind = t.value("optimizer", "kind", o.kind, |e| word(e, OptimizerKind::parse, "sgd, adam"))?;
    o.step_size = t.value("optimizer", "step_size", o.step_size, positive)?;
    o.momentum = t.value("optimizer", "momentum", o.momentum, unit_open)?;
    if o.kind == OptimizerKind::Adam {
        o.beta2 = t.value("optimizer", "beta2", o.beta2, unit_open)?;
        o.eps = t.value("optimizer", "eps", o.eps, positive)?;
    }
    o.clip_norm = t.value("optimizer", "clip_norm", o.clip_norm, |e| {
        if e.value == "none" {
            Ok(None)
        } else {
            positive(e).map(Some)
        }
    })?;
    o.lr_decay = t.value("optimizer", "lr_decay", o.lr_decay, unit_rate)?;

    let init_log_sigma = t.value("transform", "init_log_sigma", tc.transform.init_log_sigma, finite)?;
    let affine = t.value("transform", "kind", false, |e| {
        word(
            e,
            |v| match v {
                "affine" => Some(true),
                "conditioned" => Some(false),
                _ => None,
            },
            "affine, conditioned",
        )
    })?;
    let kind = if affine {
        TransformKind::Affine
    } else {
        TransformKind::StateConditioned {
            hidden: t.value("transform", "hidden", Vec::new(), Entry::usize_list)?,
            scale_map: t.value("transform", "scale_map", ScaleMap::Sigmoid, |e| {
                word(e, ScaleMap::parse, "exp, sigmoid")
            })?,
        }
    };
    tc.transform = TransformConfig { kind, init_log_sigma };

    let aux = t.value("policy", "kind", false, |e| {
        word(
            e,
            |v| match v {
                "aux" => Some(true),
                "simple" => Some(false),
                _ => None,
            },
            "simple, aux",
        )
    })?;
    if aux {
        tc.policy = PolicyKind::Aux {
            theta_dim: t.value("policy", "theta_dim", tc.env.action_dim(), count_pos)?,
            hidden: t.value("policy", "hidden", vec![16], Entry::usize_list)?,
        };
        tc.psi_step_size = t.value("policy", "psi_step_size", tc.psi_step_size, nonneg)?;
    }

    let a = &mut tc.advantage;
    a.mode = t.value("advantage", "mode", a.mode, |e| {
        word(e, AdvantageMode::parse, "mc_return_minus_baseline, td, gae")
    })?;
    a.gamma = t.value("advantage", "gamma", a.gamma, unit_rate)?;
    if a.mode == AdvantageMode::Gae {
        a.lambda = t.value("advantage", "lambda", a.lambda, |e| {
            let v = e.f64()?;
            checked(e, v, (0.0..=1.0).contains(&v), "in [0, 1]")
        })?;
    }
    a.normalize = t.value("advantage", "normalize", a.normalize, Entry::parse)?;
    if a.mode != AdvantageMode::McReturnMinusBaseline {
        a.td_form = t.value("advantage", "td_form", a.td_form, |e| {
            word(
                e,
                |v| match v {
                    "standard" => Some(TdForm::Standard),
                    "literal" => Some(TdForm::Literal),
                    _ => None,
                },
                "standard, literal",
            )
        })?;
    }

    let b = &mut tc.baseline;
    b.hidden = t.value("baseline", "hidden", b.hidden.clone(), Entry::usize_list)?;
    b.epochs = t.value("baseline", "epochs", b.epochs, count)?;
    b.step_size = t.value("baseline", "step_size", b.step_size, positive)?;

    cfg.train = tc;
    Ok(())
}

fn parse_density(t: &Table<'_>, d: &mut DensityRun) -> Result<()> {
    let mixture = t.value("density", "target", false, |e| {
        word(
            e,
            |v| match v {
                "gaussian" => Some(false),
                "mixture" => Some(true),
                _ => None,
            },
            "gaussian, mixture",
        )
    })?;
    d.target = if mixture {
        DensityTarget::Mixture {
            weights: t.value("density", "weights", vec![0.7, 0.3], positive_list)?,
            means: t.value("density", "means", vec![0.0, 2.0], finite_list)?,
            stds: t.value("density", "stds", vec![1.0, 1.0], positive_list)?,
        }
    } else {
        let (m0, s0) = match &d.target {
            DensityTarget::Gaussian { mean, std } => (mean.clone(), std.clone()),
            DensityTarget::Mixture { .. } => (vec![0.0], vec![1.0]),
        };
        DensityTarget::Gaussian {
            mean: t.value("density", "mean", m0, finite_list)?,
            std: t.value("density", "std", s0, positive_list)?,
        }
    };
    d.target.build().map_err(|e| Error::Config {
        line: t.get("density", "target").map_or(0, |e| e.line),
        msg: format!("density target: {e}"),
    })?;
    d.alpha = t.value("density", "alpha", d.alpha, positive)?;
    d.init_log_sigma = t.value("density", "init_log_sigma", d.init_log_sigma, finite)?;
    let f = &mut d.fit;
    f.steps = t.value("density", "steps", f.steps, count)?;
    f.step_size = t.value("density", "step_size", f.step_size, positive)?;
    f.n_particles = t.value("density", "n_particles", f.n_particles, count_pos)?;
    f.final_lr_fraction = t.value("density", "final_lr_fraction", f.final_lr_fraction, positive)?;
    f.momentum = t.value("density", "momentum", f.momentum, unit_open)?;
    f.kl_samples = t.value("density", "kl_samples", f.kl_samples, |e| {
        let v: usize = e.parse()?;
        checked(e, v, v >= 2, "at least 2")
    })?;
    Ok(())
}

fn list<T: std::fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn hidden_list(xs: &[usize]) -> String {
    if xs.is_empty() {
        "none".into()
    } else {
        list(xs)
    }
}

/// Writes every setting the command uses, so the output parses back to an
/// equal config and documents the run completely.
pub fn serialize(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    let tc = &cfg.train;
    let _ = writeln!(w, "command = {}", cfg.command.name());
    let _ = writeln!(w, "seed = {}", cfg.seed());
    let _ = writeln!(w, "out = {}", cfg.out.display());
    match cfg.command {
        Command::Train | Command::Eval => {
            let _ = writeln!(w, "algorithm = {}", tc.algorithm.name());
            let _ = writeln!(w, "env = {}", tc.env.name());
            let _ = writeln!(w, "iterations = {}", tc.iterations);
            let _ = writeln!(w, "n_particles = {}", tc.n_particles);
            let _ = writeln!(w, "rollouts = {}", tc.rollouts_per_particle);
            let _ = writeln!(w, "n_eval = {}", tc.n_eval);
            let _ = writeln!(w, "reward_scale = {:?}", tc.reward_scale);
            if let (Command::Eval, Some(p)) = (cfg.command, &cfg.checkpoint) {
                let _ = writeln!(w, "checkpoint = {}", p.display());
            }
            write_training(w, tc);
        }
        Command::FitDensity => {
            let d = &cfg.density;
            let _ = writeln!(w, "\n[density]");
            match &d.target {
                DensityTarget::Gaussian { mean, std } => {
                    let _ = writeln!(w, "target = gaussian\nmean = {}\nstd = {}", list(mean), list(std));
                }
                DensityTarget::Mixture { weights, means, stds } => {
                    let _ = writeln!(
                        w,
                        "target = mixture\nweights = {}\nmeans = {}\nstds = {}",
                        list(weights),
                        list(means),
                        list(stds)
                    );
                }
            }
            let f = &d.fit;
            let _ = writeln!(w, "alpha = {:?}\ninit_log_sigma = {:?}", d.alpha, d.init_log_sigma);
            let _ = writeln!(w, "steps = {}\nstep_size = {:?}\nn_particles = {}", f.steps, f.step_size, f.n_particles);
            let _ = writeln!(
                w,
                "final_lr_fraction = {:?}\nmomentum = {:?}\nkl_samples = {}",
                f.final_lr_fraction, f.momentum, f.kl_samples
            );
        }
        Command::Gradcheck => {
            let g = &cfg.gradcheck;
            let _ = writeln!(w, "\n[gradcheck]\ncases = {}\neps = {:?}\ntol = {:?}", g.cases, g.eps, g.tol);
        }
    }
    s
}

fn write_training(w: &mut String, tc: &TrainConfig) {
    let _ = writeln!(w, "\n[env]\nhorizon = {}\ngamma = {:?}", tc.env.horizon, tc.env.gamma);

    let s = &tc.schedule;
    match s.mode {
        ScheduleMode::Constant => {
            let _ = writeln!(w, "\n[schedule]\nmode = constant\nalpha0 = {:?}", s.alpha0);
        }
        ScheduleMode::Geometric => {
            let _ = writeln!(
                w,
                "\n[schedule]\nmode = geometric\nalpha0 = {:?}\ndecay = {:?}\nfloor = {:?}",
                s.alpha0, s.decay, s.floor
            );
        }
    }

    let o: &OptimizerConfig = &tc.optimizer;
    let _ = writeln!(w, "\n[optimizer]\nkind = {}\nstep_size = {:?}\nmomentum = {:?}", o.kind.name(), o.step_size, o.momentum);
    if o.kind == OptimizerKind::Adam {
        let _ = writeln!(w, "beta2 = {:?}\neps = {:?}", o.beta2, o.eps);
    }
    match o.clip_norm {
        Some(c) => {
            let _ = writeln!(w, "clip_norm = {c:?}");
        }
        None => {
            let _ = writeln!(w, "clip_norm = none");
        }
    }
    let _ = writeln!(w, "lr_decay = {:?}", o.lr_decay);

    match &tc.algorithm {
        Algorithm::Vpg => {}
        Algorithm::Trpo(c) => {
            let _ = writeln!(
                w,
                "\n[trpo]\ndelta = {:?}\ncg_iters = {}\ncg_damping = {:?}\nbacktrack_steps = {}",
                c.delta, c.cg_iters, c.cg_damping, c.backtrack_steps
            );
            match c.fisher_mode {
                FisherMode::KlHessian => {
                    let _ = writeln!(w, "fisher = kl_hessian");
                }
                FisherMode::ScoreCovariance { samples } => {
                    let _ = writeln!(w, "fisher = score_covariance\nfisher_samples = {samples}");
                }
            }
        }
        Algorithm::Ppo(c) => {
            let _ = writeln!(w, "\n[ppo]\nlambda_kl = {:?}\ninner_epochs = {}", c.lambda_kl, c.inner_epochs);
        }
    }

    let _ = writeln!(w, "\n[transform]");
    match &tc.transform.kind {
        TransformKind::Affine => {
            let _ = writeln!(w, "kind = affine");
        }
        TransformKind::StateConditioned { hidden, scale_map } => {
            let _ = writeln!(
                w,
                "kind = conditioned\nhidden = {}\nscale_map = {}",
                hidden_list(hidden),
                scale_map.name()
            );
        }
    }
    let _ = writeln!(w, "init_log_sigma = {:?}", tc.transform.init_log_sigma);

    match &tc.policy {
        PolicyKind::Simple => {
            let _ = writeln!(w, "\n[policy]\nkind = simple");
        }
        PolicyKind::Aux { theta_dim, hidden } => {
            let _ = writeln!(
                w,
                "\n[policy]\nkind = aux\ntheta_dim = {theta_dim}\nhidden = {}\npsi_step_size = {:?}",
                hidden_list(hidden),
                tc.psi_step_size
            );
        }
    }

    let a = &tc.advantage;
    let _ = writeln!(w, "\n[advantage]\nmode = {}\ngamma = {:?}", a.mode.name(), a.gamma);
    if a.mode == AdvantageMode::Gae {
        let _ = writeln!(w, "lambda = {:?}", a.lambda);
    }
    let _ = writeln!(w, "normalize = {}", a.normalize);
    if a.mode != AdvantageMode::McReturnMinusBaseline {
        let form = match a.td_form {
            TdForm::Standard => "standard",
            TdForm::Literal => "literal",
        };
        let _ = writeln!(w, "td_form = {form}");
    }

    let b = &tc.baseline;
    let _ = writeln!(
        w,
        "\n[baseline]\nhidden = {}\nepochs = {}\nstep_size = {:?}",
        hidden_list(&b.hidden),
        b.epochs,
        b.step_size
    );
}
