use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vpg_core::cli::{parse_config_as, run, Command, OUT_DIR_ENV};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Train,
    FitDensity,
    Gradcheck,
    Eval,
}

/// Variational policy-gradient experiments.
#[derive(Debug, Parser)]
#[command(name = "vpg")]
struct Args {
    command: Cmd,
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; takes precedence over $VPG_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let command = match args.command {
        Cmd::Train => Command::Train,
        Cmd::FitDensity => Command::FitDensity,
        Cmd::Gradcheck => Command::Gradcheck,
        Cmd::Eval => Command::Eval,
    };
    let mut cfg = match parse_config_as(&text, Some(command)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    if let Some(dir) = args.out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)) {
        cfg.out = dir;
    }
    match run(&cfg, &mut std::io::stdout()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
