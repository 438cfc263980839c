//! Drive a run from config text the way the `vpg` binary does, then rerun it
//! from the config file it saved.

use std::fs;

use vpg_core::cli::{parse_config, run, CONFIG_FILE, METRICS_FILE};

const CONFIG: &str = "
command = train
algorithm = trpo
env = lqr
seed = 7
iterations = 10

[trpo]
delta = 0.02

[schedule]
mode = constant
alpha0 = 0.5
";

fn main() -> vpg_core::Result<()> {
    let mut cfg = parse_config(CONFIG)?;
    cfg.out = std::env::temp_dir().join("vpg-run-config-example");
    run(&cfg, &mut std::io::stdout())?;

    let mut again = parse_config(&fs::read_to_string(cfg.out.join(CONFIG_FILE))?)?;
    again.out = cfg.out.join("rerun");
    run(&again, &mut std::io::sink())?;
    let same = fs::read(cfg.out.join(METRICS_FILE))? == fs::read(again.out.join(METRICS_FILE))?;
    println!("rerun from saved config reproduces metrics: {same}");
    Ok(())
}
