use std::path::Path;
use std::process::{Command, Output};

use rscpi_bench::record::{read_runs, RunRecord};
use serde_json::Value;

fn rscpi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rscpi"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn solve_matrix_game_reaches_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = rscpi(&["solve", "--model", "matrix-game", "--lambda0", "1", "--alpha", "1", "--out", "o"], dir.path());
    assert_eq!(stdout_json(&out)["J_exact"], 6.0);
    let runs = read_runs(&dir.path().join("o/runs.csv")).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].j_exact, 6.0);
    assert_eq!(runs[0].env, "matrix-game");
    assert_eq!(runs[0].ablation, "rs-cpi");
    assert!(dir.path().join("o/policy.json").exists());
    let dump = std::fs::read_to_string(dir.path().join("o/policy.txt")).unwrap();
    assert!(dump.contains("b1") && dump.contains("b2"), "{dump}");
}

#[test]
fn solve_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["0", "1"] {
        let out = rscpi(&["solve", "--model", "matrix-game", "--seed", seed, "--no-rs"], dir.path());
        assert!(out.status.success());
    }
    let text = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().filter(|l| l.starts_with("env,")).count(), 1);
}

#[test]
fn missing_model_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = rscpi(&["solve", "--model", "absent.dpomdp", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.dpomdp"));
    assert!(!dir.path().join("o").exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn malformed_model_reports_line_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.dpomdp"),
        "agents: 2\nstates: 2\nstart:\n0.5 0.48\nactions:\n1\n1\nobservations:\n1\n1\n",
    )
    .unwrap();
    let out = rscpi(&["solve", "--model", "bad.dpomdp"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.dpomdp:3: error: start distribution sums to 0.98"), "{err}");
}

#[test]
fn eval_uniform_matrix_game() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&rscpi(&["eval", "--model", "matrix-game", "--risk-lambda", "0"], dir.path()));
    assert_eq!(v["J_exact"], -3.0);
    assert_eq!(v["J_risk"], v["J_exact"]);
    assert!(v.get("mc_mean").is_none());

    let v = stdout_json(&rscpi(&["eval", "--model", "matrix-game", "--mc", "100000", "--seed", "3"], dir.path()));
    let (mean, se) = (v["mc_mean"].as_f64().unwrap(), v["mc_stderr"].as_f64().unwrap());
    assert!(se > 0.0 && (mean + 3.0).abs() <= 4.0 * se, "{mean} ± {se}");
}

#[test]
fn eval_reads_solved_policy() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rscpi(&["solve", "--model", "matrix-game", "--lambda0", "1", "--alpha", "1"], dir.path()).status.success());
    let v = stdout_json(&rscpi(
        &["eval", "--model", "matrix-game", "--policy", "policy.json", "--risk-lambda", "2"],
        dir.path(),
    ));
    assert_eq!(v["J_exact"], 6.0);
    assert!((v["J_risk"].as_f64().unwrap() - 6.0).abs() < 1e-12);
}

#[test]
fn eval_rejects_mismatched_policy() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rscpi(&["solve", "--model", "matrix-game"], dir.path()).status.success());
    let out = rscpi(&["eval", "--model", "matrix-game", "--horizon", "2", "--policy", "policy.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rscpi(&["eval", "--model", "matrix-game", "--risk-lambda", "-1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

fn write_config(dir: &Path, body: &str) {
    std::fs::write(dir.join("grid.json"), body).unwrap();
}

#[test]
fn sweep_rejects_empty_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"model": "matrix-game", "horizons": [1], "seeds": []}"#);
    let out = rscpi(&["sweep", "grid.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}

#[test]
fn sweep_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"model": "matrix-game", "horizons": [1], "sedes": [1]}"#);
    assert_eq!(rscpi(&["sweep", "grid.json"], dir.path()).status.code(), Some(2));
}

fn strip_timing(records: Vec<RunRecord>) -> Vec<RunRecord> {
    records.iter().map(RunRecord::without_timing).collect()
}

#[test]
fn sweep_is_deterministic_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let tiger = concat!(env!("CARGO_MANIFEST_DIR"), "/../../benchmarks/dectiger.dpomdp");
    write_config(
        dir.path(),
        &format!(
            r#"{{"model": "{tiger}", "horizons": [2, 3], "agent_states": [1, [1, 2]],
               "lambda0": [0, 0.5], "alpha": [0.5, 1], "anneal_sweeps": [5], "seeds": [0, 1],
               "ablations": ["rs-cpi", "none"], "out": "a", "workers": 2}}"#
        ),
    );
    let first = rscpi(&["sweep", "grid.json"], dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = rscpi(&["sweep", "grid.json", "--out", "b"], dir.path());
    assert!(second.status.success());
    let a = read_runs(&dir.path().join("a/runs.csv")).unwrap();
    let b = read_runs(&dir.path().join("b/runs.csv")).unwrap();
    assert!(!a.is_empty());
    assert!(a.iter().all(|r| r.env == "dectiger" && r.init_obs_mode == "dummy"));
    assert_eq!(strip_timing(a), strip_timing(b));
    let report = std::fs::read_to_string(dir.path().join("a/report.md")).unwrap();
    assert!(report.contains("## dectiger"));
    assert!(report.contains("No CPI + No RS Z=1x2"));
    assert!(report.contains("| 3 |"));
}

#[test]
fn report_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rscpi(&["solve", "--model", "matrix-game", "--lambda0", "1", "--alpha", "1"], dir.path()).status.success());
    let out = rscpi(&["report", "runs.csv", "--out", "r"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("| 1 | 6.00 |"), "{text}");
    assert!(dir.path().join("r/report.md").exists());

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    assert_eq!(rscpi(&["report", "empty.csv"], dir.path()).status.code(), Some(2));
    let header = rscpi_bench::record::COLUMNS.join(",") + "\n";
    std::fs::write(dir.path().join("header.csv"), header).unwrap();
    assert_eq!(rscpi(&["report", "header.csv"], dir.path()).status.code(), Some(2));
}
