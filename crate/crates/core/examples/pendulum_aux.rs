//! Auxiliary-network policy `a = MLP_psi([theta, s]) + zeta` on the pendulum,
//! with a small hidden layer in the state-conditioned transform.

use vpg_core::algos::{Algorithm, PolicyKind, TrainConfig, Trainer, TransformConfig, TransformKind};
use vpg_core::envs::EnvSpec;
use vpg_core::transform::ScaleMap;

fn main() -> vpg_core::Result<()> {
    let mut cfg = TrainConfig::new(EnvSpec::builtin("pendulum")?, Algorithm::Vpg, 4);
    cfg.iterations = 30;
    cfg.policy = PolicyKind::Aux {
        theta_dim: 4,
        hidden: vec![16],
    };
    cfg.transform = TransformConfig {
        kind: TransformKind::StateConditioned {
            hidden: vec![8],
            scale_map: ScaleMap::Sigmoid,
        },
        ..TransformConfig::default()
    };
    let mut trainer = Trainer::new(cfg)?;
    while !trainer.is_done() {
        let m = trainer.step()?;
        println!(
            "iter {:>2}  batch return {:>9.3}  eval return {:>9.3}  log det {:.3}",
            m.iteration,
            m.get("mean_return").unwrap(),
            m.get("eval_return").unwrap(),
            m.get("log_det_mean").unwrap()
        );
    }
    Ok(())
}
