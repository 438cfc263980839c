use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use vpg_core::algos::{train, TrainState, METRIC_NAMES};
use vpg_core::cli::{
    parse_config, run, serialize, Command, RunConfig, CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE, GRADCHECK_FILE,
    METRICS_FILE, OUT_DIR_ENV, TIMING_FILE,
};
use vpg_core::transform::InvertibleTransform;

fn small_train(dir: &Path, algo: &str) -> RunConfig {
    let mut c = RunConfig::new(Command::Train, algo, "lqr", 21).unwrap();
    c.train.iterations = 4;
    c.train.n_particles = 3;
    c.train.n_eval = 4;
    c.out = dir.join(algo);
    c
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn train_run_directory_is_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_train(dir.path(), "trpo");
    assert!(run(&cfg, &mut std::io::sink()).unwrap());

    let m = rows(&cfg.out.join(METRICS_FILE));
    let mut header = vec!["iteration".to_string()];
    header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    assert_eq!(m[0], header);
    assert_eq!(m.len(), 1 + cfg.train.iterations);
    for (k, row) in m[1..].iter().enumerate() {
        assert_eq!(row.len(), header.len());
        assert_eq!(row[0], k.to_string());
        assert!(row[1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
    assert_eq!(rows(&cfg.out.join(TIMING_FILE)).len(), 1 + cfg.train.iterations);

    // the saved config alone reproduces the run
    let text = fs::read_to_string(cfg.out.join(CONFIG_FILE)).unwrap();
    let mut again = parse_config(&text).unwrap();
    assert_eq!(again, cfg);
    again.out = dir.path().join("again");
    run(&again, &mut std::io::sink()).unwrap();
    assert_eq!(
        fs::read(cfg.out.join(METRICS_FILE)).unwrap(),
        fs::read(again.out.join(METRICS_FILE)).unwrap()
    );

    let direct = train(cfg.train.clone()).unwrap();
    let loaded = TrainState::load(&cfg.train, &cfg.out.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(loaded.transform, direct.state.transform);
    assert_eq!(loaded.baseline, direct.state.baseline);
}

#[test]
fn eval_logs_mean_and_standard_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_train(dir.path(), "ppo");
    run(&cfg, &mut std::io::sink()).unwrap();
    let mut e = cfg.clone();
    e.command = Command::Eval;
    e.train.n_eval = 6;
    let mut log = Vec::new();
    run(&e, &mut log).unwrap();
    let log = String::from_utf8(log).unwrap();
    assert!(log.contains("mean return") && log.contains("se "), "{log}");

    let r = rows(&e.out.join(EVAL_FILE));
    let returns: Vec<f64> = r[1..7].iter().map(|row| row[1].parse().unwrap()).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let logged = |key: &str| -> f64 { r.iter().find(|row| row[0] == key).unwrap()[1].parse().unwrap() };
    assert!((logged("mean") - mean).abs() <= 1e-12 * mean.abs());
    assert!((logged("se") - (var / n).sqrt()).abs() <= 1e-9 * (var / n).sqrt());
    assert!(logged("lqr_optimal") > mean);
    // the training run's config is left alone
    assert_eq!(parse_config(&fs::read_to_string(e.out.join(CONFIG_FILE)).unwrap()).unwrap(), cfg);
}

#[test]
fn gradcheck_status_follows_the_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = RunConfig::new(Command::Gradcheck, "vpg", "lqr", 1).unwrap();
    g.gradcheck.cases = 5;
    g.out = dir.path().join("ok");
    let mut log = Vec::new();
    assert!(run(&g, &mut log).unwrap());
    let text = String::from_utf8(log).unwrap();
    for suite in vpg_core::gradcheck::SUITES {
        assert!(text.contains(suite), "{text}");
    }
    assert_eq!(rows(&g.out.join(GRADCHECK_FILE)).len(), 1 + vpg_core::gradcheck::SUITES.len());

    g.gradcheck.tol = 1e-300;
    g.out = dir.path().join("strict");
    assert!(!run(&g, &mut std::io::sink()).unwrap());
}

#[test]
fn fit_density_writes_trace_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = RunConfig::new(Command::FitDensity, "vpg", "lqr", 2).unwrap();
    f.density.fit.steps = 50;
    f.out = dir.path().to_path_buf();
    run(&f, &mut std::io::sink()).unwrap();
    let r = rows(&f.out.join(METRICS_FILE));
    assert_eq!(r[0], ["step", "kl", "kl_se", "mu0", "log_sigma0"]);
    assert_eq!(r.len(), 1 + 51);
    assert!(f.out.join(CHECKPOINT_FILE).exists());
}

#[test]
fn divergence_keeps_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_train(dir.path(), "vpg");
    cfg.train.optimizer.step_size = 1e300;
    cfg.train.optimizer.clip_norm = None;
    cfg.train.iterations = 10;
    let err = run(&cfg, &mut std::io::sink()).unwrap_err();
    assert!(matches!(err, vpg_core::Error::Diverged { .. }), "{err:?}");
    let ckpt = cfg.out.join(CHECKPOINT_FILE);
    let state = TrainState::load(&cfg.train, &ckpt).unwrap();
    assert!(state.transform.params().is_finite());
    // every logged metric row is complete and finite
    for row in &rows(&cfg.out.join(METRICS_FILE))[1..] {
        assert!(row[1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
}

#[test]
fn binary_exit_codes_and_out_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_vpg");
    let cfg_path = dir.path().join("g.txt");
    fs::write(&cfg_path, "seed = 0\n[gradcheck]\ncases = 3\n").unwrap();
    let out = dir.path().join("from-env");
    let status = Proc::new(bin)
        .args(["gradcheck", "--config"])
        .arg(&cfg_path)
        .env(OUT_DIR_ENV, &out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(out.join(GRADCHECK_FILE).exists());

    let flag = dir.path().join("from-flag");
    let status = Proc::new(bin)
        .args(["gradcheck", "--seed", "5", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&flag)
        .env(OUT_DIR_ENV, &out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let saved = parse_config(&fs::read_to_string(flag.join(CONFIG_FILE)).unwrap()).unwrap();
    assert_eq!(saved.seed(), 5);

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "seed = 1\nalgorithm = trpo\n[trpo]\ndelta = -0.1\n").unwrap();
    let status = Proc::new(bin).args(["train", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("line 4") && stderr.contains("trpo.delta"), "{stderr}");
}

#[test]
fn serialized_defaults_document_every_section() {
    let cfg = RunConfig::new(Command::Train, "trpo", "lqr", 0).unwrap();
    let text = serialize(&cfg);
    for section in ["[env]", "[schedule]", "[optimizer]", "[trpo]", "[transform]", "[policy]", "[advantage]", "[baseline]"] {
        assert!(text.contains(section), "{text}");
    }
}
