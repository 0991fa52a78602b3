use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_callias");

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("callias-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env("CALLIAS_THREADS", "2").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: PathBuf, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

const ZERO_MODEL: &str = r#"{"d": 3, "n": 4, "h": 1.0, "m": 2, "mass": 0.3, "potential": {"family": "zero"}, "phi": {"radius": 1.5}}"#;

#[test]
fn clifford_check_writes_residuals_and_manifest() {
    let dir = scratch("clifford");
    let out = run(&dir, &["clifford-check", "--d", "3", "--d", "5", "--d", "7", "--out", "c"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let dims = csv_column(dir.join("c/residuals.csv"), "d");
    assert_eq!(dims, vec![3.0, 5.0, 7.0]);
    for r in csv_column(dir.join("c/residuals.csv"), "anticommutation_residual") {
        assert!(r <= 1e-12);
    }
    let manifest = read_json(dir.join("c/manifest.json"));
    assert_eq!(manifest["experiment"], "clifford-check");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(read_json(dir.join("c/summary.json"))["pass"].as_bool().unwrap());
}

#[test]
fn trace_compare_with_zero_potential_is_exact() {
    let dir = scratch("trace");
    write(&dir, "tc.json", &format!(r#"{{"experiment": "trace-compare", "lattice": {{"model": {ZERO_MODEL}, "t_list": [0.5, 1.0]}}}}"#));
    let out = run(&dir, &["trace-compare", "--config", "tc.json", "--out", "tc"]);
    assert_eq!(code(&out), 0);
    for col in ["lhs", "rhs", "relgap"] {
        assert!(csv_column(dir.join("tc/trace_compare.csv"), col).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn validate_names_offending_fields() {
    let dir = scratch("validate");
    let even = r#"{"experiment": "trace-compare", "lattice": {"model": {"d": 4, "n": 4, "h": 1.0, "potential": {"family": "zero"}, "phi": {"radius": 1.5}}, "t_list": [0.5]}}"#;
    write(&dir, "even.json", even);
    let out = run(&dir, &["validate", "even.json"]);
    assert_eq!(code(&out), 2);
    let issues: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(issues[0]["field"], "lattice.model.d");

    let no_potential = r#"{"experiment": "trace-compare", "lattice": {"model": {"d": 3, "n": 4, "h": 1.0, "phi": {"radius": 1.5}}, "t_list": [0.5]}}"#;
    write(&dir, "nopot.json", no_potential);
    let out = run(&dir, &["validate", "nopot.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("potential"));

    write(&dir, "missing.json", r#"{"experiment": "example"}"#);
    let out = run(&dir, &["validate", "missing.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("example"));

    write(&dir, "ok.json", &format!(r#"{{"experiment": "trace-compare", "lattice": {{"model": {ZERO_MODEL}, "t_list": [1.0]}}}}"#));
    let out = run(&dir, &["validate", "ok.json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(serde_json::from_slice::<Value>(&out.stdout).unwrap(), Value::Array(vec![]));
}

#[test]
fn unknown_keys_and_bad_arguments_are_usage_errors() {
    let dir = scratch("usage");
    write(
        &dir,
        "extra.json",
        &format!(r#"{{"experiment": "trace-compare", "lattice": {{"model": {ZERO_MODEL}, "t_list": [1.0], "tlist": [2.0]}}}}"#),
    );
    assert_eq!(code(&run(&dir, &["validate", "extra.json"])), 2);
    assert_eq!(code(&run(&dir, &["trace-compare", "--config", "extra.json"])), 2);
    assert_eq!(code(&run(&dir, &["trace-compare", "--config", "absent.json"])), 2);
    assert_eq!(code(&run(&dir, &["no-such-command"])), 2);
    assert_eq!(code(&run(&dir, &["example", "index", "--potential", "cubic"])), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = scratch("determinism");
    write(&dir, "sc.json", r#"{"experiment": "ssf", "seed": 7, "ssf": {"mode": "check", "order": 3, "dim": 3, "instances": 3, "t_values": [0.5, 1.0]}}"#);
    let mc = r#"{"experiment": "example", "example": {"potential": {"family": "hedgehog", "width": 1.0}, "method": "density",
        "integrators": {"zint": {"kind": "monte_carlo", "samples": 200, "seed": 11}, "xint": {"kind": "spherical", "radial": 12, "polar": 6, "azimuthal": 6, "scale": 1.0}}}}"#;
    write(&dir, "mc.json", mc);
    for tag in ["a", "b"] {
        assert_eq!(code(&run(&dir, &["ssf", "check", "--config", "sc.json", "--out", &format!("sc{tag}")])), 0);
        let out = run(&dir, &["example", "index", "--config", "mc.json", "--out", &format!("mc{tag}")]);
        assert!(code(&out) <= 1, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = |path: &str| std::fs::read(dir.join(path)).unwrap();
    for file in ["pairing.csv", "summary.json"] {
        assert_eq!(bytes(&format!("sca/{file}")), bytes(&format!("scb/{file}")));
    }
    assert_eq!(bytes("mca/index.json"), bytes("mcb/index.json"));
}

#[test]
fn kernel_checks_pass() {
    let dir = scratch("kernels");
    for check in ["schlafli", "derivative", "limit"] {
        let out = run(&dir, &["example", "kernels", "--d", "3", "--check", check, "--out", check]);
        assert_eq!(code(&out), 0, "{check}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(dir.join(check).join(format!("{check}.csv")).exists());
    }
}

#[test]
fn winding_routes_for_hedgehog_and_scalar() {
    let dir = scratch("winding");
    let out = run(&dir, &["example", "index", "--potential", "hedgehog", "--method", "winding", "--out", "h"]);
    assert_eq!(code(&out), 0);
    let index = read_json(dir.join("h/index.json"))["winding"]["index"].as_f64().unwrap();
    assert!((index + 1.0).abs() < 1e-2, "{index}");

    let out = run(&dir, &["example", "index", "--potential", "scalar", "--method", "winding", "--out", "s"]);
    assert_eq!(code(&out), 0);
    let index = read_json(dir.join("s/index.json"))["winding"]["index"].as_f64().unwrap();
    assert!(index.abs() < 1e-2, "{index}");
}

#[test]
fn lattice_eta_feeds_the_transform() {
    let dir = scratch("chain");
    let model = r#"{"d": 3, "n": 4, "h": 1.0, "m": 1, "mass": 0.5, "potential": {"family": "fourier", "amplitude": 0.7, "seed": 3}, "phi": {"radius": 1.5}}"#;
    write(&dir, "s.json", &format!(r#"{{"experiment": "ssf", "ssf": {{"mode": "compute", "model": {model}}}}}"#));
    assert_eq!(code(&run(&dir, &["ssf", "compute", "--config", "s.json", "--out", "s"])), 0);
    let out = run(&dir, &["transform", "xi", "--eta", "s/eta.json", "--d", "3", "--grid", "0:3:7", "--out", "x"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let lambda = csv_column(dir.join("x/xi.csv"), "lambda");
    assert_eq!(lambda, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    assert_eq!(csv_column(dir.join("x/xi.csv"), "xi")[0], 0.0);
    // a lattice η is purely atomic, so there is no Lebesgue point for the index
    assert_eq!(code(&run(&dir, &["transform", "witten", "--eta", "s/eta.json", "--d", "3", "--out", "w"])), 3);
}
