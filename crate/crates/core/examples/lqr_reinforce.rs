//! Variational REINFORCE on the default LQR, compared against the Riccati
//! controller on the same evaluation draws.

use vpg_core::algos::{eval_stream, Algorithm, TrainConfig, Trainer};
use vpg_core::envs::{lqr_optimal_return, EnvSpec};

fn main() -> vpg_core::Result<()> {
    let env = EnvSpec::builtin("lqr")?;
    let cfg = TrainConfig::new(env.clone(), Algorithm::Vpg, 0);
    let optimal = lqr_optimal_return(env.lqr().unwrap(), env.gamma, env.horizon, cfg.n_eval, &eval_stream(cfg.seed))?;
    let mut trainer = Trainer::new(cfg)?;
    while !trainer.is_done() {
        let m = trainer.step()?;
        if m.iteration % 20 == 19 {
            let ret = m.get("eval_return").unwrap();
            println!(
                "iter {:>3}  alpha {:.3}  eval return {ret:>9.3}  optimal/achieved {:.3}",
                m.iteration,
                m.get("alpha").unwrap(),
                optimal / ret
            );
        }
    }
    println!("Riccati optimum {optimal:.3}");
    Ok(())
}
