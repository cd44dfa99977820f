use std::path::Path;
use std::process::{Command, Output};

fn xrego(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xrego"))
        .args(args)
        .current_dir(cwd)
        .env_remove("XREGO_WORKERS")
        .output()
        .expect("spawn xrego")
}

const PLAN: &str = r#"
seed = 3
problems = ["branin", "zettl"]
dims = [6]
reps = 2
k_max = 3
include_no_embedding = true
variants = [{ type = "adaptive" }, { type = "uniform_random" }]
solvers = [{ type = "single_start_local" }]

[budgets.local]
embedded_evals = 200
no_embedding_evals = 2000
no_embedding_solver = { type = "multi_start_local", starts = 4 }
"#;

#[test]
fn gen_writes_manifest_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = xrego(
        &[
            "gen",
            "--dims",
            "10",
            "--seed",
            "4",
            "--out",
            "m.toml",
            "--plan",
            "plan.toml",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = std::fs::read_to_string(dir.path().join("m.toml")).unwrap();
    assert_eq!(m.matches("[[problems]]").count(), 19);
    assert!(std::fs::read_to_string(dir.path().join("plan.toml"))
        .unwrap()
        .contains("local_adaptive"));
}

#[test]
fn run_profile_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plan.toml"), PLAN).unwrap();
    let out = xrego(
        &[
            "run",
            "--config",
            "plan.toml",
            "--out",
            "res",
            "--workers",
            "2",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["results.csv", "profiles.csv", "profiles.svg", "medians.csv"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
    let results = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();

    let out = xrego(
        &["profile", "--results", "res/results.csv", "--out", "again"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["medians.csv", "profiles.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("res").join(f)).unwrap(),
            std::fs::read(dir.path().join("again").join(f)).unwrap()
        );
    }

    let out = xrego(
        &[
            "replay",
            "--config",
            "plan.toml",
            "--problem",
            "branin",
            "--dim",
            "6",
            "--variant",
            "LN-REGO",
            "--solver",
            "local",
            "--rep",
            "1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let replayed = String::from_utf8(out.stdout).unwrap();
    let mut lines = replayed.lines();
    lines.next();
    let body: Vec<&str> = lines.collect();
    assert!(!body.is_empty());
    for l in body {
        assert!(results.lines().any(|r| r == l), "{l}");
    }
}

#[test]
fn worker_env_is_read_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plan.toml"), PLAN).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_xrego"))
        .args(["run", "--config", "plan.toml", "--out", "res"])
        .env("XREGO_WORKERS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = xrego(&["run", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(
        dir.path().join("bad.toml"),
        "seed = 1\nvariants = []\nsolvers = []\n",
    )
    .unwrap();
    let out = xrego(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("r.csv"), "problem,D\n").unwrap();
    let out = xrego(&["profile", "--results", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = xrego(
        &[
            "validate",
            "--mc-samples",
            "1000",
            "--out",
            "report.json",
            "--csv",
            "report.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(json.contains("\"checks\""));
    assert!(std::fs::read_to_string(dir.path().join("report.csv"))
        .unwrap()
        .starts_with("check,passed,seed"));
}
