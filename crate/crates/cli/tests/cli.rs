use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cfaid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfaid"))
        .args(args)
        .current_dir(dir)
        .env_remove("CFAID_TOL")
        .output()
        .expect("run cfaid")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn analyze_three_item_design() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "q.csv", "1,0\n1,1\n1,1\n");
    let out = cfaid(&["analyze", "q.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["theta_identifiable"], serde_json::json!([true, false]));
    assert_eq!(v["a_identifiable"], serde_json::json!([false, true]));
    assert_eq!(v["masking"], serde_json::json!([[false, false], [true, false]]));
    assert_eq!(v["intersection_sets"], serde_json::json!([[1], [1, 2]]));
}

#[test]
fn analyze_reports_undefined_and_warnings() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "q.csv", "1,0\n0,0\n");
    let out = cfaid(&["analyze", "q.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["a_identifiable"], serde_json::json!(["undefined", "undefined"]));
    assert_eq!(v["warnings"].as_array().unwrap().len(), 2);
    assert!(stderr(&out).contains("empty support"));
}

#[test]
fn analyze_csv_table() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "q.csv", "1,0\n0,1\n");
    let out = cfaid(&["--format", "csv", "analyze", "q.csv"], dir.path());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "factor,theta_identifiable,a_identifiable\n1,true,true\n2,true,true\n"
    );
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "q.csv", "1,2\n0,1\n");
    write(dir.path(), "ragged.csv", "1,0\n1\n");
    write(dir.path(), "bad.json", "{\"theta\": 3}");
    for args in [
        &["analyze", "q.csv"][..],
        &["analyze", "ragged.csv"],
        &["analyze", "missing.csv"],
        &["check", "bad.json"],
        &["--tol", "2", "demo", "decay", "--n", "10"],
        &["generate", "--n", "5", "--j", "6", "--k", "2", "--plant", "2-1"],
        &["no-such-command"],
    ] {
        let out = cfaid(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        assert!(out.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn tolerance_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfaid"))
        .args(["demo", "decay", "--n", "10"])
        .env("CFAID_TOL", "nonsense")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("CFAID_TOL"));
}

#[test]
fn generate_check_counterexample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = cfaid(
        &["generate", "--n", "10", "--j", "20", "--k", "3", "--seed", "4", "--plant", "2>1"],
        p,
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    fs::write(p.join("bundle.json"), &out.stdout).unwrap();

    let out = cfaid(&["--paranoid", "check", "bundle.json"], p);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["overall"], true);

    let out = cfaid(&["counterexample", "bundle.json", "--column", "2"], p);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["perturbation"]["kind"], "theta-counterexample");
    assert_eq!(v["perturbation"]["k_prime"], 1);
    assert!(v["verification"]["recomposition_error"].as_f64().unwrap() <= 1e-12);
    fs::write(p.join("alt.json"), &out.stdout).unwrap();
    let out = cfaid(&["check", "alt.json"], p);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = cfaid(&["counterexample", "bundle.json", "--column", "1", "--loading", "--eps", "0.01"], p);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["perturbation"]["kind"], "a-counterexample");
    assert_eq!(v["perturbation"]["epsilon"], 0.01);
}

#[test]
fn counterexample_preconditions_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = cfaid(&["generate", "--n", "8", "--j", "12", "--k", "3", "--seed", "1", "--identity"], p);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    fs::write(p.join("bundle.json"), &out.stdout).unwrap();
    for args in [
        &["counterexample", "bundle.json", "--column", "1"][..],
        &["counterexample", "bundle.json", "--column", "2", "--loading"],
        &["counterexample", "bundle.json", "--column", "1", "--partner", "2"],
    ] {
        let out = cfaid(args, p);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
    let out = cfaid(&["counterexample", "bundle.json", "--column", "4"], p);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_rejects_invalid_model() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = r#"{"theta": [[1, 0], [0, 1], [1, 1]],
        "a": [[1, 0], [0, 1], [1, 1], [1, -1]],
        "q": [[1, 0], [0, 1], [1, 1], [1, 1]]}"#;
    write(dir.path(), "ok.json", bundle);
    let out = cfaid(&["check", "ok.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let leaky = bundle.replace("[[1, 0], [0, 1], [1, 1], [1, -1]]", "[[1, 0.5], [0, 1], [1, 1], [1, -1]]");
    write(dir.path(), "leaky.json", &leaky);
    let out = cfaid(&["check", "leaky.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["a3_violations"], serde_json::json!([[1, 2]]));
}

#[test]
fn recover_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "q.csv", "1,0\n0,1\n1,1\n1,1\n");
    write(p, "m.csv", "1,0,1,1\n0,1,1,-1\n1,1,2,0\n");
    let out = cfaid(&["recover", "m.csv", "q.csv"], p);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let dirs = v["directions"].as_array().unwrap();
    assert_eq!(dirs.len(), 2);
    let d1: Vec<f64> = dirs[0]["vector"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let s = 0.5f64.sqrt();
    for (got, want) in d1.iter().zip([s, 0.0, s]) {
        assert!((got - want).abs() < 1e-12, "{d1:?}");
    }
    assert!(v["diagnostics"]["max_residual"].as_f64().unwrap() < 1e-12);

    let out = cfaid(&["--format", "csv", "recover", "m.csv", "q.csv"], p);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[0].lines().count(), 3);
    assert_eq!(blocks[1].lines().count(), 4);
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["intersection_dims"], serde_json::json!([1, 1]));
}

#[test]
fn recover_skips_masking_factor() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "q.csv", "1,0\n1,0\n1,1\n1,1\n");
    write(p, "m.csv", "1,2,1,0\n0,1,1,1\n1,0,2,3\n");
    let out = cfaid(&["recover", "m.csv", "q.csv"], p);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["diagnostics"]["skipped"], serde_json::json!([2]));
    assert!(stderr(&out).contains("factor 2: not identifiable"));

    write(p, "short.csv", "1,0\n0,1\n");
    let out = cfaid(&["recover", "m.csv", "short.csv"], p);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn decay_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfaid(&["demo", "decay", "--n", "250"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,m,sigma_min,frobenius_sq,bound,bound_holds");
    let ns: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["10", "100", "250"]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
}
