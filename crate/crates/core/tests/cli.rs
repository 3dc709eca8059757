use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "edges": [
    {"order": 2, "length": 1.0, "nu": [[0, 0]], "potential": {"type": "polynomial", "coeffs": [[[0.3, 0]]]}},
    {"order": 2, "length": 1.0, "nu": [[-2, 0]], "potential": {"type": "polynomial", "coeffs": [[[0, 0], [0, 0], [0.8, 0]]]}},
    {"order": 2, "length": 0.8, "nu": [[0, 0]]}
  ],
  "w": 3,
  "grid": {"kind": "ray", "theta": 1.2, "t_min": 1, "t_max": 50, "count": 6},
  "tol": {"series": 1e-16, "volterra": 1e-4, "linear": 1e-8, "roundtrip": 1e-6},
  "recover": {"edge": 1, "target": {"kind": "boundary", "s": 1}, "terms": [[0, 0]], "lower": [-1], "upper": [1], "truth": [0.3]},
  "verify": {"edges": [1], "sectors": [0]}
}"#;

fn starspec(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_starspec"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn forward_reduce_verify_recover_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = starspec(dir.path(), CONFIG, &["forward", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["M_1.csv", "M_2.csv", "M_3.csv", "m_1.csv", "m_2.csv", "m_3.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let fwd = json(&out.join("forward_report.json"));
    assert_eq!(fwd["pass"], true);
    assert!(fwd["max_residual"].as_f64().unwrap() < 1e-8);

    let o = starspec(dir.path(), CONFIG, &["reduce"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let red = json(&out.join("reduction_report.json"));
    assert!(red["max_residual"].as_f64().unwrap() < 1e-6);
    assert!(out.join("m_pN_reconstructed.csv").exists());

    let o = starspec(dir.path(), CONFIG, &["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("asymptotics_report.json"))["pass"], true);

    let o = starspec(dir.path(), CONFIG, &["recover"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = json(&out.join("recovery_report.json"));
    assert!((rec["params"][0].as_f64().unwrap() - 0.3).abs() < 1e-6);
    assert_eq!(rec["monotone"], true);
}

#[test]
fn forward_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(starspec(a.path(), CONFIG, &["forward"]).status.code(), Some(0));
    assert_eq!(starspec(b.path(), CONFIG, &["forward", "--workers", "3"]).status.code(), Some(0));
    for f in ["M_1.csv", "m_2.csv", "forward_report.json"] {
        assert_eq!(
            fs::read(a.path().join("out").join(f)).unwrap(),
            fs::read(b.path().join("out").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_boundary_matrix_names_s() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(starspec(dir.path(), CONFIG, &["forward"]).status.code(), Some(0));
    fs::remove_file(dir.path().join("out").join("M_2.csv")).unwrap();
    let o = starspec(dir.path(), CONFIG, &["reduce"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s = 2"));
    assert!(!dir.path().join("out").join("reduction_report.json").exists());
}

#[test]
fn zero_gamma_diagonal_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(r#""nu": [[-2, 0]], "#, r#""nu": [[-2, 0]], "gamma": [[[0, 0]], [[0, 0], [1, 0]]], "#);
    let o = starspec(dir.path(), &bad, &["forward"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn empty_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = starspec(dir.path(), CONFIG, &["forward", "--grid-count", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unreachable_recovery_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONFIG
        .replace(r#"[[[0.3, 0]]]"#, r#"[[[0, 0], [0, 0], [3, 0]]]"#)
        .replace(r#""truth": [0.3]"#, r#""max_iter": 20, "restarts": 0"#)
        .replace(r#""lower": [-1], "upper": [1]"#, r#""lower": [-5], "upper": [5]"#);
    let o = starspec(dir.path(), &cfg, &["recover"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = starspec(dir.path(), &CONFIG.replace(r#""w": 3"#, r#""w": 3, "colour": 1"#), &["forward"]);
    assert_eq!(o.status.code(), Some(2));
}
