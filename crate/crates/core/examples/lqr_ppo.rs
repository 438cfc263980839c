//! Variational PPO on the default LQR, then a sweep of the KL penalty on one
//! batch.

use vpg_core::algos::{
    batch_policy_kl, ppo_variational_step, Algorithm, OptimizerConfig, PpoConfig, TrainConfig, Trainer,
};
use vpg_core::envs::EnvSpec;

fn main() -> vpg_core::Result<()> {
    let mut cfg = TrainConfig::new(EnvSpec::builtin("lqr")?, Algorithm::Ppo(PpoConfig::default()), 2);
    cfg.iterations = 200;
    let mut trainer = Trainer::new(cfg)?;
    while !trainer.is_done() {
        let m = trainer.step()?;
        if m.iteration % 40 == 39 {
            println!("iter {:>3}  eval return {:>9.3}", m.iteration, m.get("eval_return").unwrap());
        }
    }

    let parts = trainer.collect()?;
    let old = trainer.state().model();
    let opt = OptimizerConfig {
        step_size: 1e-4,
        ..OptimizerConfig::default()
    };
    for lambda_kl in [0.1, 1.0, 10.0] {
        let mut s = trainer.state().clone();
        ppo_variational_step(&mut s, &parts, 0.05, &opt, &PpoConfig { lambda_kl, inner_epochs: 4 })?;
        let kl = batch_policy_kl(&s.transform, &s.model(), &old, &parts)?;
        println!("lambda {lambda_kl:>4}  KL to the batch policy {kl:.3e}");
    }
    Ok(())
}
