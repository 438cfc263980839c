//! Training loops that wire the KL engine to environments: variational
//! REINFORCE, variational TRPO (natural gradient with a trust region) and
//! variational PPO (KL penalty).

mod config;
mod optim;
mod train;
mod trust;

pub use config::{Algorithm, BaselineConfig, PolicyKind, PpoConfig, TrainConfig, TransformConfig, TransformKind, TrpoConfig};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use train::{
    batch_policy_kl, eval_stream, evaluate_mean_policy, ppo_variational_step, reinforce_variational_step, train,
    trpo_proposal, trpo_variational_step, MetricRecord, StepInfo, TrainRun, TrainState, Trainer, TrpoProposal,
    METRIC_NAMES,
};
pub use trust::{
    conjugate_gradient, fisher_vector_product, gaussian_kl, importance_ratio, mean_policy_kl, ppo_objective,
    surrogate_loss, CgResult, FisherMode, FisherProduct, MAX_LOG_RATIO,
};
