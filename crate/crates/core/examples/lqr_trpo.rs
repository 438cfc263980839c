//! Variational TRPO on the default LQR; prints the measured policy KL of
//! each step next to the trust-region bound.

use vpg_core::algos::{Algorithm, TrainConfig, Trainer, TrpoConfig};
use vpg_core::envs::EnvSpec;

fn main() -> vpg_core::Result<()> {
    let trpo = TrpoConfig::default();
    let mut cfg = TrainConfig::new(EnvSpec::builtin("lqr")?, Algorithm::Trpo(trpo), 1);
    cfg.iterations = 100;
    let mut trainer = Trainer::new(cfg)?;
    let mut rejected = 0;
    while !trainer.is_done() {
        let m = trainer.step()?;
        if m.get("step_accepted") == Some(0.0) {
            rejected += 1;
        }
        if m.iteration % 10 == 9 {
            println!(
                "iter {:>3}  eval return {:>9.3}  KL {:.2e} (delta {})",
                m.iteration,
                m.get("eval_return").unwrap(),
                m.get("kl_old").unwrap(),
                trpo.delta
            );
        }
    }
    println!("{rejected} steps rejected by the line search");
    Ok(())
}
