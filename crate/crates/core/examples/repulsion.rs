//! With rewards zeroed only the log-determinant term acts, and it pushes the
//! parameter distribution apart.

use vpg_core::algos::{train, Algorithm, TrainConfig, TransformConfig, TransformKind};
use vpg_core::envs::EnvSpec;

fn main() -> vpg_core::Result<()> {
    let mut cfg = TrainConfig::new(EnvSpec::builtin("point_mass")?, Algorithm::Vpg, 0);
    cfg.iterations = 100;
    cfg.reward_scale = 0.0;
    cfg.transform = TransformConfig {
        kind: TransformKind::Affine,
        ..TransformConfig::default()
    };
    let run = train(cfg)?;
    for m in run.metrics.iter().step_by(10) {
        println!("iter {:>3}  mean log sigma {:.4}", m.iteration, m.get("log_sigma_mean").unwrap());
    }
    Ok(())
}
