//! Training configuration.

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::estimators::AdvantageConfig;
use crate::klengine::TemperatureSchedule;
use crate::transform::ScaleMap;

use super::optim::OptimizerConfig;
use super::trust::FisherMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrpoConfig {
    /// Trust-region bound on the mean policy KL (nats).
    pub delta: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    /// Maximum number of step halvings in the line search.
    pub backtrack_steps: usize,
    pub fisher_mode: FisherMode,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        TrpoConfig {
            delta: 0.01,
            cg_iters: 10,
            cg_damping: 0.1,
            backtrack_steps: 10,
            fisher_mode: FisherMode::KlHessian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub lambda_kl: f64,
    pub inner_epochs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lambda_kl: 1.0,
            inner_epochs: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Variational REINFORCE.
    Vpg,
    Trpo(TrpoConfig),
    Ppo(PpoConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Vpg => "vpg",
            Algorithm::Trpo(_) => "trpo",
            Algorithm::Ppo(_) => "ppo",
        }
    }
}

/// How `phi` maps base noise to the policy parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    /// `theta = mu + sigma * xi`, one `theta` per episode.
    Affine,
    /// `theta = mean(s) + sigma(s) * xi`, re-evaluated at every state.
    StateConditioned { hidden: Vec<usize>, scale_map: ScaleMap },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformConfig {
    pub kind: TransformKind,
    pub init_log_sigma: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            kind: TransformKind::StateConditioned {
                hidden: Vec::new(),
                scale_map: ScaleMap::Sigmoid,
            },
            init_log_sigma: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// `a = theta + zeta`.
    Simple,
    /// `a = MLP_psi([theta, s]) + zeta`.
    Aux { theta_dim: usize, hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub step_size: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            hidden: vec![16],
            epochs: 20,
            step_size: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    pub transform: TransformConfig,
    pub policy: PolicyKind,
    pub n_particles: usize,
    pub rollouts_per_particle: usize,
    pub iterations: usize,
    /// For TRPO, `step_size` is the natural-gradient step before the trust-region cap.
    pub optimizer: OptimizerConfig,
    pub psi_step_size: f64,
    pub schedule: TemperatureSchedule,
    pub advantage: AdvantageConfig,
    pub baseline: BaselineConfig,
    pub seed: u64,
    /// Evaluation episodes of the mean policy after each iteration.
    pub n_eval: usize,
    /// Multiplies training rewards; `0` leaves only the log-det term.
    /// Evaluation always uses the true rewards.
    pub reward_scale: f64,
}

/// Per-algorithm step defaults, tuned on the default LQR. For TRPO the step
/// size is the cap `eta` on the natural step.
fn default_optimizer(algorithm: &Algorithm) -> OptimizerConfig {
    let (step_size, clip_norm, lr_decay) = match algorithm {
        Algorithm::Vpg => (0.005, Some(5.0), 0.99),
        Algorithm::Ppo(_) => (0.001, Some(5.0), 0.99),
        Algorithm::Trpo(_) => (0.1, None, 0.97),
    };
    OptimizerConfig {
        step_size,
        clip_norm,
        lr_decay,
        ..OptimizerConfig::default()
    }
}

impl TrainConfig {
    pub fn new(env: EnvSpec, algorithm: Algorithm, seed: u64) -> Self {
        let advantage = AdvantageConfig {
            gamma: env.gamma,
            ..AdvantageConfig::default()
        };
        let optimizer = default_optimizer(&algorithm);
        TrainConfig {
            env,
            algorithm,
            transform: TransformConfig::default(),
            policy: PolicyKind::Simple,
            n_particles: 8,
            rollouts_per_particle: 2,
            iterations: 200,
            optimizer,
            psi_step_size: 0.01,
            schedule: TemperatureSchedule::geometric(1.0, 0.98, 0.05),
            advantage,
            baseline: BaselineConfig::default(),
            seed,
            n_eval: 16,
            reward_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.optimizer.validate()?;
        self.schedule.validate()?;
        self.advantage.validate()?;
        if self.n_particles == 0 || self.rollouts_per_particle == 0 {
            return Err(Error::Invalid("n_particles and rollouts_per_particle must be positive".into()));
        }
        if !self.reward_scale.is_finite() {
            return Err(Error::Invalid(format!("reward_scale must be finite, got {}", self.reward_scale)));
        }
        if self.n_eval == 0 {
            return Err(Error::Invalid("n_eval must be positive".into()));
        }
        if !(self.psi_step_size >= 0.0) || !(self.baseline.step_size > 0.0) {
            return Err(Error::Invalid("psi_step_size must be >= 0 and baseline step_size > 0".into()));
        }
        match &self.algorithm {
            Algorithm::Vpg => {}
            Algorithm::Trpo(t) => {
                if !(t.delta > 0.0) {
                    return Err(Error::Invalid(format!("delta must be positive, got {}", t.delta)));
                }
                if !(t.cg_damping > 0.0) {
                    return Err(Error::Invalid(format!("cg_damping must be positive, got {}", t.cg_damping)));
                }
                if t.cg_iters == 0 {
                    return Err(Error::Invalid("cg_iters must be positive".into()));
                }
                if let FisherMode::ScoreCovariance { samples: 0 } = t.fisher_mode {
                    return Err(Error::Invalid("fisher samples must be positive".into()));
                }
            }
            Algorithm::Ppo(p) => {
                if !(p.lambda_kl > 0.0) {
                    return Err(Error::Invalid(format!("lambda_kl must be positive, got {}", p.lambda_kl)));
                }
                if p.inner_epochs == 0 {
                    return Err(Error::Invalid("inner_epochs must be positive".into()));
                }
            }
        }
        if let PolicyKind::Aux { theta_dim: 0, .. } = self.policy {
            return Err(Error::Invalid("theta_dim must be positive".into()));
        }
        Ok(())
    }
}
