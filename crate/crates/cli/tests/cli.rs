//! End-to-end runs of the `ekw` binary on small configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const DESK_MODEL: &str = include_str!("../../../configs/desk_model.toml");

fn ekw(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ekw")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) {
    let out = ekw(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_report(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {stderr}"))
}

const SMALL_RUN: &str = r#"
seed = 99
model = "model.toml"
data = "out/panel.csv"
output_dir = "out"

[simulate]
persons = 150
emax_draws = 40

[estimate]
free = ["beta_tc1", "delta"]
n_sim = 20
emax_draws = 40
nelder_mead = { max_evals = 8 }
bfgs = { max_iter = 2 }

[qoi]
persons = 100
emax_draws = 30

[[policies]]
name = "subsidy_1000"
edits = [{ path = "beta_tc1", delta = -1000.0 }]

[[policies]]
name = "subsidy_3000"
edits = [{ path = "beta_tc1", delta = -3000.0 }]

[bootstrap]
draws = 12
alpha = 0.1

[decision]
alpha_grid = [0.2]
uniform_draws = 8

[trace]
points = 3
"#;

/// A scratch directory holding a four-period copy of the desk model and `config`.
fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("model.toml"), DESK_MODEL.replace("t_max = 25", "t_max = 19")).unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

const PIPELINE: [&str; 6] = ["simulate", "fit", "estimate", "bootstrap", "trace", "rank"];

fn run_pipeline(dir: &Path, threads: &str) {
    for cmd in PIPELINE {
        ok(&["--threads", threads, cmd, "--config", "run.toml"], dir);
    }
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn toy_reproduces_the_four_decisions() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["toy", "--alpha", "0.1", "--out", "toy"], dir.path());
    let ranks = fs::read_to_string(dir.path().join("toy/decision_ranks.csv")).unwrap();
    let lines: Vec<&str> = ranks.lines().collect();
    assert_eq!(lines, ["rule,g1,g2", "as_if,1,1", "maximin,2,1", "minimax_regret,1,2", "bayes,1,2"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("toy/toy_summary.json")).unwrap()).unwrap();
    assert!((summary["acceptance_rate"].as_f64().unwrap() - 0.9).abs() < 0.006);
    for name in ["fig1_trace.csv", "fig3_dist.csv", "fig4_regret.csv", "decision_table.json", "manifest_toy.json"] {
        assert!(dir.path().join("toy").join(name).exists(), "{name}");
    }
}

#[test]
fn pipeline_artifacts_are_reproducible_across_runs_and_threads() {
    let a = workspace(SMALL_RUN);
    let b = workspace(SMALL_RUN);
    run_pipeline(a.path(), "1");
    run_pipeline(b.path(), "3");
    let (fa, fb) = (artifacts(a.path()), artifacts(b.path()));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for expected in ["panel.csv", "fit.csv", "estimate.json", "bootstrap.json", "qoi_samples.csv", "qoi_samples_subsidy_1000.csv", "trace.csv", "decision_table.json", "alpha_sweep.json", "manifest_rank.json"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    assert_eq!(names, fb.iter().map(|f| f.0.as_str()).collect::<Vec<_>>());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        assert!(x == y, "{name} differs");
    }

    // Fitting the model to its own simulated panel reproduces the data exactly.
    let fit = fs::read_to_string(a.path().join("out/fit.csv")).unwrap();
    let rows = |source: &str| -> Vec<String> {
        fit.lines().filter_map(|l| l.strip_prefix(source)).map(str::to_string).collect()
    };
    assert!(!rows("observed,").is_empty());
    assert_eq!(rows("observed,"), rows("simulated,"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("out/manifest_bootstrap.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["inputs"][0]["name"], "estimate");

    // A set so small that no draw lands in it fails cleanly.
    let out = ekw(&["bootstrap", "--config", "run.toml", "--draws", "1", "--alpha", "0.999"], a.path());
    let report = error_report(&out);
    assert_eq!(report["error"], "NoAcceptedDraws");
}

#[test]
fn configuration_and_data_errors_are_reported_as_json() {
    let dir = workspace(&SMALL_RUN.replace("[trace]", "[trace]\nunknown_key = 1"));
    let report = error_report(&ekw(&["simulate", "--config", "run.toml"], dir.path()));
    assert!(report["message"].as_str().unwrap().contains("unknown"), "{report}");

    let dir = workspace(SMALL_RUN);
    fs::write(dir.path().join("model.toml"), DESK_MODEL.replace("type_shares = [0.6, 0.4]", "type_shares = [0.6, 0.6]")).unwrap();
    let report = error_report(&ekw(&["simulate", "--config", "run.toml"], dir.path()));
    assert_eq!(report["error"], "NonSimplexShares");

    let dir = workspace(SMALL_RUN);
    ok(&["simulate", "--config", "run.toml"], dir.path());
    let panel = dir.path().join("out/panel.csv");
    let text = fs::read_to_string(&panel).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // Bump the second row's schooling so it no longer follows from the first.
    let mut fields: Vec<String> = lines[2].split(',').map(str::to_string).collect();
    fields[4] = (fields[4].parse::<u32>().unwrap() + 3).to_string();
    lines[2] = fields.join(",");
    fs::write(&panel, lines.join("\n") + "\n").unwrap();
    let report = error_report(&ekw(&["fit", "--config", "run.toml"], dir.path()));
    assert_eq!(report["error"], "TransitionInconsistency", "{report}");

    fs::write(&panel, "person_id,period\n1,16\n").unwrap();
    let report = error_report(&ekw(&["fit", "--config", "run.toml"], dir.path()));
    assert_eq!(report["error"], "SchemaError", "{report}");

    let report = error_report(&ekw(&["bootstrap", "--config", "missing.toml"], dir.path()));
    assert_eq!(report["error"], "Error");
}
