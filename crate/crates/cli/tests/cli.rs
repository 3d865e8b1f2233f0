//! Grid-runner and binary behavior: file outputs, curve invariants,
//! byte-level determinism of artifacts, and CLI smoke tests.

use std::fs;
use std::path::Path;
use std::process::Command;

use healnet_cli::config::{Grid, StrategyArg};
use healnet_cli::runner;

fn small_grid() -> Grid {
    Grid {
        n: vec![256],
        f: vec![1.0 / 32.0],
        check: vec![1],
        strategy: vec![StrategyArg::AlwaysCorrupt],
        sends: 1_500,
        seeds: vec![1, 2],
        baseline: true,
        baseline_sends: 20,
        ..Grid::default()
    }
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn run_grid_writes_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let outcomes = runner::run_grid(&small_grid(), Some(tmp.path())).unwrap();
    assert_eq!(outcomes.len(), 1);
    let name = &outcomes[0].cell.name;
    for suffix in [
        "seed1.csv",
        "seed2.csv",
        "msgs_curve.csv",
        "corruption_curve.csv",
        "messages.svg",
        "corruption.svg",
        "summary.json",
    ] {
        assert!(
            tmp.path().join(format!("{name}-{suffix}")).exists(),
            "missing artifact {name}-{suffix}"
        );
    }
    assert!(tmp.path().join("grid-summary.json").exists());

    // The summary must embed the resolved per-trial configuration.
    let summary = read(tmp.path(), &format!("{name}-summary.json"));
    assert!(summary.contains("\"seed\": 1"));
    assert!(summary.contains("\"n\": 256"));
    assert!(summary.contains("reduction_factor"));

    // An adversary run's smoothed corruption curve ends below where it
    // started (healing), and the reduction factor is meaningful.
    let curve = read(tmp.path(), &format!("{name}-corruption_curve.csv"));
    let values: Vec<f64> =
        curve.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(values.len() == 1_500);
    assert!(values.last().unwrap() < values.first().unwrap() || *values.first().unwrap() == 0.0);
    assert!(outcomes[0].aggregate.reduction_factor.unwrap() > 1.0);
}

#[test]
fn rerunning_a_grid_reproduces_identical_files() {
    let grid = Grid { seeds: vec![7], sends: 600, ..small_grid() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    runner::run_grid(&grid, Some(a.path())).unwrap();
    runner::run_grid(&grid, Some(b.path())).unwrap();
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let fa = fs::read(a.path().join(&name)).unwrap();
        let fb = fs::read(b.path().join(&name)).unwrap();
        assert_eq!(fa, fb, "artifact {name} differs between identical runs");
    }
}

#[test]
fn fault_free_corruption_curve_is_identically_zero() {
    let grid = Grid {
        f: vec![0.0],
        strategy: vec![StrategyArg::FaithfulControl],
        sends: 400,
        seeds: vec![3],
        baseline: false,
        ..small_grid()
    };
    let tmp = tempfile::tempdir().unwrap();
    let outcomes = runner::run_grid(&grid, Some(tmp.path())).unwrap();
    let curve = read(tmp.path(), &format!("{}-corruption_curve.csv", outcomes[0].cell.name));
    for line in curve.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0);
    }
    assert_eq!(outcomes[0].aggregate.total_corrupted, 0);
}

#[test]
fn baseline_messages_curve_is_flat() {
    let summaries = runner::run_baseline(&[256], 1.0 / 32.0, 30, &[5], None).unwrap();
    assert_eq!(summaries.len(), 1);
    // Constant per-send cost: overall mean equals the tail mean exactly.
    assert_eq!(summaries[0].mean_messages, summaries[0].tail_mean_messages);
}

fn healnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_healnet"))
}

#[test]
fn binary_oracle_report_prints_parameters() {
    let out = healnet().args(["oracle-report", "--n", "1024,14116"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("14116"));
    assert!(text.contains("30360"), "naive cost missing from:\n{text}");
}

#[test]
fn binary_run_rejects_empty_seed_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("grid.toml");
    fs::write(&cfg, "seeds = []\n").unwrap();
    let out = healnet().args(["run", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("seed list is empty"), "unexpected stderr: {err}");
}

#[test]
fn binary_run_small_grid_reports_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = healnet()
        .args([
            "run",
            "--n",
            "256",
            "--f",
            "0.03125",
            "--check",
            "1",
            "--strategy",
            "always-corrupt",
            "--sends",
            "400",
            "--seeds",
            "1",
            "--baseline",
            "--out",
        ])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("reduction"), "missing reduction factor in:\n{text}");
    assert!(tmp.path().join("grid-summary.json").exists());
}
