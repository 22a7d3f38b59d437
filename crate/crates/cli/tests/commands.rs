use std::path::Path;
use std::process::{Command, Output};

use cril_core::dataset::{prepare, read_dataset, PrepareOptions};
use cril_core::InputMode;

fn cril(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cril")).args(args).current_dir(dir).env_remove("CRIL_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn short_config(dir: &Path) {
    std::fs::write(dir.join("sim.cfg"), "max_steps=150\n").unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cril(&["prepare", "--in", "a", "--out", "b", "--shuffle-twice"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(cril(&[], dir.path()).status.code(), Some(1));
    assert_eq!(cril(&["train", "--data", "x"], dir.path()).status.code(), Some(1));
    assert_eq!(cril(&["eval", "--model", "m", "--episodes", "ten"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.cfg"), "horsepower=9000\n").unwrap();
    assert_eq!(cril(&["stats", "--data", "x", "--config", "bad.cfg"], dir.path()).status.code(), Some(1));
    assert_eq!(cril(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = cril(&["eval", "--model", "missing.crnn", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("seed: 1 (flag)"));
    std::fs::write(dir.path().join("junk.cril"), b"not a dataset").unwrap();
    assert_eq!(cril(&["stats", "--data", "junk.cril"], dir.path()).status.code(), Some(2));
}

#[test]
fn seed_sources() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(cril(&["gradcheck", "--examples", "1"], dir.path()));
    assert!(out.starts_with("seed: 0 (default)"), "{out}");
    let o = Command::new(env!("CARGO_BIN_EXE_cril"))
        .args(["gradcheck", "--examples", "1"])
        .env("CRIL_SEED", "42")
        .output()
        .unwrap();
    assert!(ok(o).starts_with("seed: 42 (CRIL_SEED)"));
    std::fs::write(dir.path().join("s.cfg"), "seed=8\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cril"))
        .args(["gradcheck", "--examples", "1", "--config", "s.cfg"])
        .current_dir(dir.path())
        .env("CRIL_SEED", "42")
        .output()
        .unwrap();
    assert!(ok(o).starts_with("seed: 8 (config)"));
}

fn pipeline(dir: &Path) -> Vec<Vec<u8>> {
    short_config(dir);
    ok(cril(&["expert-record", "--episodes", "2", "--out", "raw.cril", "--seed", "7", "--config", "sim.cfg"], dir));
    let out = ok(cril(
        &[
            "prepare", "--in", "raw.cril", "--out", "train.cril", "--grayscale", "--augment", "--balance",
            "--discard-intro", "--seed", "7",
        ],
        dir,
    ));
    assert!(out.contains("pipeline: discard-intro -> balance -> grayscale -> augment"), "{out}");
    ok(cril(
        &[
            "train", "--data", "train.cril", "--epochs", "1", "--batch", "32", "--lr", "1e-3", "--seed", "7", "--out",
            "model.crnn", "--curve", "loss.csv",
        ],
        dir,
    ));
    let report = ok(cril(&["eval", "--model", "model.crnn", "--episodes", "3", "--seed", "100", "--config", "sim.cfg"], dir));
    let lines: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("average,"));
    let rewards: Vec<f64> = lines[..3].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let avg: f64 = lines[3].split(',').nth(1).unwrap().parse().unwrap();
    assert!((avg - rewards.iter().sum::<f64>() / 3.0).abs() < 1e-5);

    ["raw.cril", "train.cril", "model.crnn", "loss.csv", "loss.holdout.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .chain(std::iter::once(report.into_bytes()))
        .collect()
}

#[test]
fn full_pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    assert_eq!(first, pipeline(b.path()));

    // Augmentation quadruples whatever survives discard and balance.
    let raw = read_dataset(&a.path().join("raw.cril")).unwrap();
    let opts = PrepareOptions { grayscale: false, augment: false, ..PrepareOptions::all(7) };
    let kept = prepare(raw, &opts).unwrap().len();
    let train = read_dataset(&a.path().join("train.cril")).unwrap();
    assert_eq!(train.len(), 4 * kept);
    assert_eq!(train.mode, InputMode::Gray);

    let holdout = std::fs::read_to_string(a.path().join("loss.holdout.csv")).unwrap();
    assert!(holdout.starts_with("epoch,loss,accuracy\n"));

    let stats = ok(cril(&["stats", "--data", "train.cril"], a.path()));
    let total: usize = stats.lines().skip(2).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, train.len());
}
