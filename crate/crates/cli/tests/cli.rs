//! The `lasium` binary: exit codes, output files and deterministic runs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lasium(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lasium")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Small benchmark settings shared by every run below.
#[rustfmt::skip]
const SMALL: &[&str] = &[
    "--set", "synth_classes=30",
    "--set", "synth_per_class=20",
    "--set", "policy=noise",
    "--set", "eps_dist=1.0",
    "--set", "meta_iterations=8",
    "--set", "n_eval_tasks=12",
];

fn run(dir: &Path, sub: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![sub, "--out", out, "--seed", "21", "--deterministic"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    lasium(&args)
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(code(&lasium(&[])), 2);
    assert_eq!(code(&lasium(&["evaluate", "--bogus"])), 2);
    assert_eq!(code(&lasium(&["make-synthetic", "--set", "no_such_key=1"])), 2);
    assert_eq!(code(&lasium(&["make-synthetic", "--set", "n_way"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ldat");
    let o = lasium(&["train-gen", "--out", dir.path().to_str().unwrap(), "--dataset", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("run.ini");
    fs::write(&ini, "# comment\nn_way = 1\n").unwrap();
    let o = lasium(&["baseline-scratch", "--config", ini.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupt_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ldat");
    fs::write(&bad, b"NOPE0000").unwrap();
    let o = lasium(&["train-gen", "--out", dir.path().to_str().unwrap(), "--dataset", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), "make-synthetic", &[])), 0);
    let data = dir.path().join("dataset.ldat");
    let o = run(
        dir.path(),
        "train-gen",
        &["--dataset", data.to_str().unwrap(), "--set", "vae_lr=1e300", "--set", "vae_epochs=2"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

fn pipeline(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    assert_eq!(code(&run(dir, "make-synthetic", &[])), 0);
    let gen = dir.join("analytic.lgen");
    let data = dir.join("dataset.ldat");
    let learner = dir.join("learner.lgen");
    let o = run(dir, "meta-train", &["--generator", gen.to_str().unwrap(), "--dataset", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(dir, "evaluate", &["--learner", learner.to_str().unwrap(), "--dataset", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("over 12 episodes"));
    (fs::read(dir.join("metrics.csv")).unwrap(), fs::read(dir.join("report.csv")).unwrap())
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, ra) = pipeline(a.path());
    let (mb, rb) = pipeline(b.path());
    assert_eq!(ma, mb);
    assert_eq!(ra, rb);
    let metrics = String::from_utf8(ma).unwrap();
    assert_eq!(metrics.lines().next(), Some("iteration,meta_loss,wall_ms"));
    assert_eq!(metrics.lines().count(), 9);
    let report = String::from_utf8(ra).unwrap();
    assert_eq!(report.lines().next(), Some("task_id,accuracy"));
    assert_eq!(report.lines().count(), 13);
}

#[test]
fn baselines_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, "make-synthetic", &[])), 0);
    let data = d.join("dataset.ldat");
    let gen = d.join("analytic.lgen");
    assert_eq!(code(&run(d, "baseline-scratch", &["--dataset", data.to_str().unwrap()])), 0);
    assert!(d.join("scratch_report.csv").exists());
    assert_eq!(code(&run(d, "baseline-supervised", &["--dataset", data.to_str().unwrap()])), 0);
    assert!(d.join("supervised_report.csv").exists() && d.join("audit_baseline_supervised.json").exists());
    assert_eq!(code(&run(d, "dump-tasks", &["--generator", gen.to_str().unwrap(), "--n", "2"])), 0);
    assert!(d.join("task_0001/contact.pgm").exists() && !d.join("task_0002").exists());
}
