//! Experiment runner: configuration files, run directories and the
//! `train`, `fit-density`, `gradcheck` and `eval` commands.

mod config;
mod run;

pub use config::{parse_config, parse_config_as, serialize, Command, DensityRun, DensityTarget, RunConfig, CHECKPOINT_FILE};
pub use run::{run, CONFIG_FILE, EVAL_CONFIG_FILE, EVAL_FILE, GRADCHECK_FILE, METRICS_FILE, TIMING_FILE};

/// Overrides the output directory from the config when set.
pub const OUT_DIR_ENV: &str = "VPG_OUT_DIR";
