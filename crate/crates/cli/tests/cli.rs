use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levystop"))
}

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn solve_mckean_on_brownian_motion() {
    let m = model("brownian.json");
    let o = run(&["solve", "mckean", "--model", m.to_str().unwrap(), "--q", "0.5", "--strike", "1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["problem", "model", "q", "threshold", "diagnostics"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["problem"]["kind"], "mckean");
    let y = v["threshold"].as_f64().unwrap();
    assert!((y + 2f64.ln()).abs() < 1e-10, "{y}");
}

#[test]
fn solve_writes_identical_files_on_rerun() {
    let m = model("brownian.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = run(&[
            "solve", "ns", "--model", m.to_str().unwrap(), "--q", "0.5", "--nu", "2", "--seed", "4", "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["solution.json", "value.csv"] {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        let b = fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = fs::read_to_string(dirs[0].path().join("value.csv")).unwrap();
    assert!(csv.starts_with("x,value,payoff\n"));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn sweep_output_is_deterministic() {
    let m = model("jump_diffusion.json");
    let args = [
        "sweep", "ns-exp", "--model", m.to_str().unwrap(), "--q", "0.5", "--seed", "9", "--paths", "2000",
        "--law-samples", "5000", "--points", "5",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    assert!(out.starts_with("y,estimate,std_error,n_paths\n"));
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn russian_option_with_high_discount_is_a_precondition_failure() {
    let m = model("bounded_variation.json");
    let o = run(&["solve", "ss", "--model", m.to_str().unwrap(), "--q", "3", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("drift") && err.contains("stopping immediately is optimal"), "{err}");
}

#[test]
fn malformed_model_exits_with_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(&path, "{\"family\": \"BrownianDrift\", \"params\": {\"mu\": 0.0").unwrap();
    let o = run(&["solve", "ss", "--model", path.to_str().unwrap(), "--q", "1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("parse error"));
}

#[test]
fn unknown_family_exits_with_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(&path, r#"{"family": "Stable", "params": {"alpha": 1.5}}"#).unwrap();
    let o = run(&["solve", "ss", "--model", path.to_str().unwrap(), "--q", "1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_is_required() {
    let m = model("brownian.json");
    let o = run(&["solve", "ss", "--model", m.to_str().unwrap(), "--q", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn missing_problem_parameter_is_a_usage_error() {
    let m = model("brownian.json");
    let o = run(&["solve", "mckean", "--model", m.to_str().unwrap(), "--q", "0.5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--strike"));
}

#[test]
fn scale_eval_emits_grid() {
    let m = model("cramer_lundberg.json");
    let o = run(&["scale", "eval", "--model", m.to_str().unwrap(), "--q", "1", "--points", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("x,W,Z,W'"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1] && w[1][2] > w[0][2]));
}

#[test]
fn scale_eval_rejects_two_sided_jumps() {
    let m = model("jump_diffusion.json");
    let o = run(&["scale", "eval", "--model", m.to_str().unwrap(), "--q", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn appell_root_and_eval() {
    let m = model("brownian.json");
    let o = run(&["appell", "root", "--model", m.to_str().unwrap(), "--q", "0.5", "--nu", "2", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["root"].as_f64().unwrap() - 2.0).abs() < 1e-8);

    let o = run(&[
        "appell", "eval", "--model", m.to_str().unwrap(), "--q", "0.5", "--nu", "2", "--y", "3", "--seed", "1",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Q_2(y) = y (y - 2) for an Exp(1) supremum.
    assert!((v["value"].as_f64().unwrap() - 3.0).abs() < 1e-10);

    let o = run(&[
        "appell", "eval", "--model", m.to_str().unwrap(), "--q", "0.5", "--nu", "2", "--y", "-1", "--seed", "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_power_payoff_passes() {
    let m = model("brownian.json");
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "verify", "ns", "--model", m.to_str().unwrap(), "--q", "0.5", "--nu", "2", "--seed", "11", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS ns"), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let (lo, hi) = (
        report["sweep"]["flat_interval"][0].as_f64().unwrap(),
        report["sweep"]["flat_interval"][1].as_f64().unwrap(),
    );
    assert!(lo <= 2.0 && 2.0 <= hi);
}

#[test]
fn verify_reports_fail_for_offset_threshold() {
    let m = model("brownian.json");
    let o = run(&[
        "verify", "mckean", "--model", m.to_str().unwrap(), "--q", "0.5", "--strike", "1", "--seed", "11",
        "--offset", "0.3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("FAIL mckean"), "{}", stdout(&o));
}
