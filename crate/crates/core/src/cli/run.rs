//! Executes a [`RunConfig`] and writes its run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::algos::{eval_stream, evaluate_mean_policy, TrainState, Trainer, METRIC_NAMES};
use crate::envs::lqr_optimal_return;
use crate::error::{ensure_finite, Error, Result};
use crate::gradcheck::run_all;
use crate::klengine::{fit_density, Target};
use crate::numcore::vecops::mean_and_se;
use crate::numcore::{write_checkpoint, RngStream};
use crate::transform::{AffineTransform, InvertibleTransform};

use super::config::{serialize, Command, RunConfig, CHECKPOINT_FILE};

pub const CONFIG_FILE: &str = "config.txt";
/// `eval` usually runs inside a training directory, so it keeps that run's config.
pub const EVAL_CONFIG_FILE: &str = "eval_config.txt";
pub const METRICS_FILE: &str = "metrics.tsv";
/// Wall-clock seconds per iteration, kept apart so the metrics file is
/// byte-identical across reruns.
pub const TIMING_FILE: &str = "timing.tsv";
pub const GRADCHECK_FILE: &str = "gradcheck.tsv";
pub const EVAL_FILE: &str = "eval.tsv";

/// Stream tag for `fit-density` draws.
const TAG_FIT: u64 = 5;

/// Appends tab-separated rows under a fixed header, refusing non-finite values.
struct Tsv {
    out: BufWriter<File>,
    what: String,
}

impl Tsv {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join("\t"))?;
        Ok(Tsv {
            out,
            what: path.display().to_string(),
        })
    }

    fn row(&mut self, key: impl std::fmt::Display, values: &[f64]) -> Result<()> {
        ensure_finite(&self.what, values)?;
        write!(self.out, "{key}")?;
        for v in values {
            write!(self.out, "\t{v}")?;
        }
        writeln!(self.out)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Runs the configured command, writing the resolved config and all outputs
/// under `cfg.out` and a human-readable summary to `log`. `Ok(false)` means
/// the command ran but its checks failed (gradcheck only).
pub fn run(cfg: &RunConfig, log: &mut dyn Write) -> Result<bool> {
    fs::create_dir_all(&cfg.out)?;
    let name = if cfg.command == Command::Eval {
        EVAL_CONFIG_FILE
    } else {
        CONFIG_FILE
    };
    fs::write(cfg.out.join(name), serialize(cfg))?;
    match cfg.command {
        Command::Train => run_train(cfg, log).map(|_| true),
        Command::FitDensity => run_fit(cfg, log).map(|_| true),
        Command::Gradcheck => run_gradcheck(cfg, log),
        Command::Eval => run_eval(cfg, log).map(|_| true),
    }
}

fn run_train(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let mut header = vec!["iteration"];
    header.extend(METRIC_NAMES);
    let mut metrics = Tsv::create(&cfg.out.join(METRICS_FILE), &header)?;
    let mut timing = Tsv::create(&cfg.out.join(TIMING_FILE), &["iteration", "wall_seconds"])?;
    let ckpt = cfg.out.join(CHECKPOINT_FILE);
    let mut trainer = Trainer::new(cfg.train.clone())?;
    writeln!(
        log,
        "train {} on {} seed {}: {} iterations",
        cfg.train.algorithm.name(),
        cfg.train.env.name(),
        cfg.seed(),
        cfg.train.iterations
    )?;
    while !trainer.is_done() {
        let rec = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                trainer.state().save(&ckpt)?;
                writeln!(log, "stopped at iteration {}: {e}; saved last good state", trainer.state().step)?;
                return Err(e);
            }
        };
        let values: Vec<f64> = rec.values.iter().map(|(_, v)| *v).collect();
        metrics.row(rec.iteration, &values)?;
        timing.row(rec.iteration, &[rec.wall_seconds])?;
        let every = (cfg.train.iterations / 10).max(1);
        if (rec.iteration + 1) % every == 0 {
            writeln!(
                log,
                "iter {:>5}  alpha {:.4}  eval_return {:.4}  kl_old {:.2e}",
                rec.iteration,
                rec.get("alpha").unwrap_or(f64::NAN),
                rec.get("eval_return").unwrap_or(f64::NAN),
                rec.get("kl_old").unwrap_or(f64::NAN)
            )?;
        }
    }
    trainer.state().save(&ckpt)?;
    writeln!(log, "wrote {}", cfg.out.display())?;
    Ok(())
}

fn run_fit(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let d = &cfg.density;
    let dim = d.target.dim();
    let target = Target::from_arc(d.target.build()?, d.alpha)?;
    let t0 = AffineTransform::new(vec![0.0; dim], vec![d.init_log_sigma; dim])?;
    let mut rng = RngStream::from_path(cfg.seed(), &[TAG_FIT]);
    let fit = fit_density(&t0, &target, &d.fit, &mut rng)?;
    let mut header = vec!["step".to_string(), "kl".to_string(), "kl_se".to_string()];
    header.extend((0..dim).map(|i| format!("mu{i}")));
    header.extend((0..dim).map(|i| format!("log_sigma{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut metrics = Tsv::create(&cfg.out.join(METRICS_FILE), &header)?;
    for (k, ((kl, se), p)) in fit.kl.iter().zip(&fit.kl_se).zip(&fit.params).enumerate() {
        let mut row = vec![*kl, *se];
        row.extend(p);
        metrics.row(k, &row)?;
    }
    write_checkpoint(&cfg.out.join(CHECKPOINT_FILE), &fit.transform.params())?;
    let t = &fit.transform;
    writeln!(log, "fit-density: {} steps, final KL estimate {:.6}", d.fit.steps, fit.kl.last().unwrap_or(&f64::NAN))?;
    writeln!(log, "mu        {:?}", t.mu())?;
    writeln!(log, "sigma     {:?}", t.log_sigma().iter().map(|l| l.exp()).collect::<Vec<_>>())?;
    Ok(())
}

fn run_gradcheck(cfg: &RunConfig, log: &mut dyn Write) -> Result<bool> {
    let reports = run_all(&cfg.gradcheck)?;
    let mut tsv = BufWriter::new(File::create(cfg.out.join(GRADCHECK_FILE))?);
    writeln!(tsv, "suite\tcases\tworst_rel_error\ttol\tpassed")?;
    let mut ok = true;
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        writeln!(tsv, "{}\t{}\t{}\t{}\t{}", r.name, r.cases, r.worst, r.tol, r.passed())?;
        writeln!(log, "{:<14} {:>4} cases  worst {:.3e}  tol {:.0e}  {status}", r.name, r.cases, r.worst, r.tol)?;
        ok &= r.passed();
    }
    tsv.flush()?;
    Ok(ok)
}

fn run_eval(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let tc = &cfg.train;
    let path = cfg.checkpoint_path();
    let state = TrainState::load(tc, &path)?;
    let rng = eval_stream(cfg.seed());
    let returns = evaluate_mean_policy(&state.transform, &state.model(), &tc.env, tc.n_eval, &rng)?;
    if returns.is_empty() {
        return Err(Error::Empty("evaluation returns".into()));
    }
    let (mean, se) = mean_and_se(&returns);
    let mut tsv = Tsv::create(&cfg.out.join(EVAL_FILE), &["episode", "return"])?;
    for (i, r) in returns.iter().enumerate() {
        tsv.row(i, &[*r])?;
    }
    tsv.row("mean", &[mean])?;
    tsv.row("se", &[se])?;
    writeln!(log, "eval {}: {} episodes, mean return {mean:.6} (se {se:.6})", path.display(), returns.len())?;
    if let Some(l) = tc.env.lqr() {
        let opt = lqr_optimal_return(l, tc.env.gamma, tc.env.horizon, tc.n_eval, &rng)?;
        tsv.row("lqr_optimal", &[opt])?;
        writeln!(log, "LQR optimal return {opt:.6}, ratio optimal/eval {:.4}", opt / mean)?;
    }
    Ok(())
}
