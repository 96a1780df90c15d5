use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cncbf");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("CNCBF_THREADS", "1").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cncbf-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

/// Coarse ground field and a briefly trained network, shared by the tests.
struct Pipeline {
    solve: PathBuf,
    train: PathBuf,
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let base = workdir("pipeline");
        let solve = base.join("solve");
        let train = base.join("train");
        let out = run(&["solve", "--grid", "15,15,8,5", "--out", s(&solve)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let field = solve.join("value.cnvf");
        let out = run(&["train", "--field", s(&field), "--epochs", "2", "--batch", "256", "--subsample", "0.3", "--out", s(&train)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Pipeline { solve, train }
    })
}

#[test]
fn solve_reports_node_count_and_reruns_bitwise() {
    let p = pipeline();
    let report = read_json(&p.solve.join("solve_report.json"));
    assert_eq!(report["node_count"], 15 * 15 * 8 * 5);
    assert_eq!(report["report"]["converged"], true);
    let again = workdir("solve-again");
    assert_eq!(code(&run(&["solve", "--grid", "15,15,8,5", "--out", s(&again)])), 0);
    assert_eq!(fs::read(p.solve.join("value.cnvf")).unwrap(), fs::read(again.join("value.cnvf")).unwrap());
}

#[test]
fn train_reports_parameter_count() {
    let report = read_json(&pipeline().train.join("train_report.json"));
    assert_eq!(report["parameter_count"], 4837);
    assert!(pipeline().train.join("loss_history.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["solve", "--grid", "3,3"])), 2);
    assert_eq!(code(&run(&["oracle", "--suite"])), 2);
    assert_eq!(code(&run(&["oracle", "--n", "0"])), 2);
    let w = pipeline().train.join("weights.json");
    let dir = workdir("bad-dims");
    assert_eq!(code(&run(&["slice", "--weights", s(&w), "--free", "1,1", "--out", s(&dir)])), 2);
    assert_eq!(code(&run(&["bench", "--n", "1", "--out", s(&dir)])), 2);
}

#[test]
fn non_convergence_exits_3_with_report() {
    let dir = workdir("nonconv");
    let out = run(&["solve", "--grid", "11", "--max-horizon", "0.05", "--out", s(&dir)]);
    assert_eq!(code(&out), 3);
    assert_eq!(read_json(&dir.join("solve_report.json"))["report"]["converged"], false);
}

#[test]
fn mismatched_profiles_are_refused() {
    let p = pipeline();
    let dir = workdir("mismatch");
    let field = p.solve.join("value.cnvf");
    let weights = p.train.join("weights.json");
    let train = run(&["train", "--field", s(&field), "--profile", "quad", "--epochs", "1", "--out", s(&dir.join("t"))]);
    assert_eq!(code(&train), 4);
    let slice = run(&["slice", "--weights", s(&weights), "--profile", "quad", "--out", s(&dir.join("s"))]);
    assert_eq!(code(&slice), 4);
}

#[test]
fn tampered_weights_fail_gradient_suite() {
    let p = pipeline();
    let dir = workdir("tamper");
    for f in ["weights.json", "manifest.json"] {
        fs::copy(p.train.join(f), dir.join(f)).unwrap();
    }
    let path = dir.join("weights.json");
    let good = run(&["oracle", "--suite", "grad", "--n", "10", "--weights", s(&path), "--out", s(&dir.join("ok"))]);
    assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stdout));

    let mut w = read_json(&path);
    let first = &mut w["layers"][0]["weights"][0][0];
    *first = Value::from(first.as_f64().unwrap() + 0.5);
    fs::write(&path, serde_json::to_vec_pretty(&w).unwrap()).unwrap();
    let bad = run(&["oracle", "--suite", "grad", "--n", "10", "--weights", s(&path), "--out", s(&dir.join("bad"))]);
    assert_eq!(code(&bad), 4);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL grad"));
    assert_eq!(read_json(&dir.join("bad/oracle_report.json"))["passed"], false);
}

#[test]
fn degenerate_slice_holds_single_value() {
    let w = pipeline().train.join("weights.json");
    let dir = workdir("slice1");
    assert_eq!(code(&run(&["slice", "--weights", s(&w), "--resolution", "1,1", "--out", s(&dir)])), 0);
    let csv = fs::read_to_string(dir.join("slice.csv")).unwrap();
    let rows: Vec<_> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "{csv}");
}

#[test]
fn empty_scene_simulation_succeeds() {
    let w = pipeline().train.join("weights.json");
    let dir = workdir("sim0");
    assert_eq!(code(&run(&["simulate", "--seed", "4", "--m", "0", "--weights", s(&w), "--out", s(&dir)])), 0);
    let metrics = read_json(&dir.join("metrics.json"));
    assert_eq!(metrics["metrics"]["success"], true);
    assert_eq!(metrics["metrics"]["slack_steps"], 0);
}

#[test]
fn bench_smoke_matrix_is_deterministic() {
    let w = pipeline().train.join("weights.json");
    let a = workdir("bench-a");
    let b = workdir("bench-b");
    for dir in [&a, &b] {
        let out = run(&["bench", "--m-list", "1,2", "--n", "2", "--weights", s(&w), "--out", s(dir)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["summary.json", "episodes.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cells = read_json(&a.join("summary.json"));
    assert!(cells.to_string().contains("nominal"));
}
