use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FAST: &str = r#"{
    "spg.max_outer_iters": 12,
    "spg.max_inner_iters": 200,
    "baseline.max_iters": 2000,
    "backtest.window": 30,
    "backtest.hold": 5
}"#;

fn drcvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drcvar"))
        .args(["--threads", "1"])
        .args(args)
        .output()
        .expect("run drcvar")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
    data: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new(assets: &str, days: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("returns.csv");
        let config = dir.path().join("fast.json");
        fs::write(&config, FAST).unwrap();
        let out = drcvar(&[
            "gen-data",
            "--assets",
            assets,
            "--days",
            days,
            "--seed",
            "4",
            "--out",
            s(&data),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        Self { dir, data, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut args = vec![cmd, "--data", s(&self.data), "--config", s(&self.config)];
        args.extend_from_slice(extra);
        drcvar(&args)
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let a = Workspace::new("3", "40");
    let b = Workspace::new("3", "40");
    let text = fs::read_to_string(&a.data).unwrap();
    assert_eq!(text, fs::read_to_string(&b.data).unwrap());
    assert!(text.starts_with("date,index,asset_1,asset_2,asset_3\n"));
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn solve_writes_report_and_trace() {
    let ws = Workspace::new("3", "40");
    let out = ws.path("solve.json");
    let trace = ws.path("trace.csv");
    let res = ws.run(
        "solve",
        &[
            "--rows",
            "0..30",
            "--out",
            s(&out),
            "--trace-out",
            s(&trace),
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let report = json(&out);
    assert_eq!(report["model"], "drcvar-l2");
    let weights = report["weights"].as_object().unwrap();
    let total: f64 = weights.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let trace = fs::read_to_string(&trace).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("cpu_seconds,objective"));
    assert!(lines.count() > 0);
}

#[test]
fn strict_solve_reports_iteration_cap() {
    let ws = Workspace::new("3", "40");
    let res = ws.run("solve", &["--strict", "--out", s(&ws.path("s.json"))]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn backtest_is_byte_identical_with_omitted_timings() {
    let ws = Workspace::new("3", "50");
    let a = ws.path("a.json");
    let b = ws.path("b.json");
    for p in [&a, &b] {
        let res = ws.run(
            "backtest",
            &["--model", "scvar-l2", "--omit-timings", "--out", s(p)],
        );
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report = json(&a);
    assert_eq!(report["t_bar"], 4);
    assert_eq!(report["per_window"].as_array().unwrap().len(), 4);
}

#[test]
fn grid_search_selects_minimum() {
    let ws = Workspace::new("2", "45");
    let out = ws.path("grid.json");
    let res = ws.run(
        "grid-search",
        &[
            "--model",
            "te-l2",
            "--grid",
            "0,0.001,0.1",
            "--out",
            s(&out),
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let v = json(&out);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    let min = rows
        .iter()
        .map(|r| r["report"]["teo"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(v["selected"]["report"]["teo"].as_f64().unwrap(), min);
}

#[test]
fn compare_lists_models_and_unavailable_baselines() {
    let ws = Workspace::new("3", "45");
    let out = ws.path("cmp.json");
    let res = ws.run("compare", &["--out", s(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let v = json(&out);
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(names, ["drcvar-l2", "scvar-l2", "te-l2"]);
    for r in rows {
        assert!(r["tei"].as_f64().unwrap().is_finite());
        assert!(r["teo"].as_f64().unwrap().is_finite());
    }
    assert_eq!(v["unavailable"].as_array().unwrap().len(), 4);
}

#[test]
fn validation_errors_exit_2_without_output() {
    let ws = Workspace::new("2", "20");
    let out = ws.path("never.json");
    let res = ws.run("backtest", &["--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    let res = ws.run("backtest", &["--set", "model.beta=1.5", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let res = ws.run("backtest", &["--set", "model.tau9=1", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let res = ws.run("solve", &["--model", "lasso", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "date,index,a\n2020-01-01,0.01,-1.5\n2020-01-02,0.0,0.0\n",
    )
    .unwrap();
    let out = dir.path().join("o.json");
    let res = drcvar(&["solve", "--data", s(&bad), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());

    fs::write(&bad, "date,index,a,extra\n2020-01-01,0.01,0.0\n").unwrap();
    let res = drcvar(&["solve", "--data", s(&bad), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    let res = drcvar(&[
        "solve",
        "--data",
        s(&dir.path().join("missing.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(res.status.code(), Some(3));
}
