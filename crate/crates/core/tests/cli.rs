use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neumann-plap")).args(args).arg("--out").arg(out).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_run_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["full", "--domain", "grid:8", "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "domain.json",
        "solution.json",
        "degiorgi.csv",
        "degiorgi.json",
        "minimizer_set.json",
        "boundedness.json",
        "oscillation.csv",
        "oscillation.json",
        "subminimizer.json",
        "natural_boundary.json",
        "verify_summary.json",
        "diagnostics.json",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    assert_eq!(json(&dir.path().join("verify_summary.json"))["passed"], true);
    let csv = fs::read_to_string(dir.path().join("degiorgi.csv")).unwrap();
    assert!(csv.starts_with("x,r,R,k,level,lhs,rhs_volume,rhs_boundary,ratio\n"));
}

#[test]
fn model_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--domain", "path:3", "--p", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let sol = json(&dir.path().join("solution.json"));
    let u = &sol["u"];
    let (a, b, c) = (u["a"].as_f64().unwrap(), u["b"].as_f64().unwrap(), u["c"].as_f64().unwrap());
    assert!((a.abs() - 1.0).abs() < 1e-8 && b.abs() < 1e-8 && (a + c).abs() < 1e-8);
    assert!((sol["energy"]["total"].as_f64().unwrap() + 1.0).abs() < 1e-8);
    assert_eq!(sol["converged"], true);
}

#[test]
fn incompatible_data_is_an_error_unless_projected() {
    let dir = tempfile::tempdir().unwrap();
    let data = r#"{"a": 1.0, "c": -0.5}"#;
    let out = run(&["solve", "--domain", "path:3", "--data", data], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("compatibility defect"), "{err}");
    assert!(!dir.path().join("solution.json").exists());

    let out = run(&["solve", "--domain", "path:3", "--data", data, "--project-compat"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let u = &json(&dir.path().join("solution.json"))["u"];
    // projected data is (0.75, -0.75)
    assert!((u["a"].as_f64().unwrap().abs() - 0.75).abs() < 1e-8);
}

#[test]
fn bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve", "--p", "1"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["solve", "--data", "sideways"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["solve", "--domain", "/no/such/domain.json"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = run(&["verify", "--domain", "lshape:8", "--data", "random", "--seed", "5"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["solution.json", "degiorgi.csv", "oscillation.json", "minimizer_set.json", "verify_summary.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn format_flag_selects_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--domain", "grid:6", "--format", "csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("degiorgi.csv").is_file());
    assert!(!dir.path().join("degiorgi.json").exists());
}
