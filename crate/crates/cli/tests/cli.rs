use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::Value;

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpspectra")).current_dir(dir).args(args).output().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).expect("stderr is one JSON object")
}

/// Sorted eigenvalues of the q×q Bloch matrix of `u_{n+1} + u_{n-1} + 2λ cos 2π(x + nα) u_n`.
fn bloch(lambda: f64, p: i64, q: usize, x: f64, theta: f64) -> Vec<f64> {
    let mut h = DMatrix::<Complex64>::zeros(q, q);
    for n in 0..q {
        h[(n, n)] += Complex64::new(2.0 * lambda * (2.0 * PI * (x + (n as i64 * p) as f64 / q as f64)).cos(), 0.0);
        let m = (n + 1) % q;
        let ph = if n + 1 == q { Complex64::from_polar(1.0, 2.0 * PI * theta) } else { Complex64::new(1.0, 0.0) };
        h[(n, m)] += ph;
        h[(m, n)] += ph.conj();
    }
    let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[test]
fn free_spectrum_is_one_band() {
    let dir = workdir("free");
    std::fs::write(dir.join("free.json"), r#"{"degree": 0, "coeffs": [[0, 0]]}"#).unwrap();
    let out = run(&dir, &["spectrum", "--pq", "1/3", "--potential", "free.json", "--xgrid", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let es: Vec<f64> = rows(&dir.join("out/butterfly.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(es.len(), 2 * 3 * 8);
    let lo = es.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = es.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!((lo + 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    let bands = rows(&dir.join("out/bands.csv"));
    assert_eq!(bands.len(), 1);
    assert_eq!(bands[0][..2], ["1", "3"]);
}

/// Union gaps against the band edges at θ = 0 and 1/2 on the same phase grid.
#[test]
fn almost_mathieu_three_fifths_has_four_labeled_gaps() {
    let dir = workdir("gaps");
    let out = run(&dir, &["gaps", "--pq", "3/5", "--lambda", "2", "--xgrid", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = rows(&dir.join("out/gaps.csv"));
    assert_eq!(got.len(), 4);
    let edges: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
        .map(|i| {
            let x = i as f64 / 80.0;
            (bloch(2.0, 3, 5, x, 0.0), bloch(2.0, 3, 5, x, 0.5))
        })
        .collect();
    for (ell, row) in (1..5).zip(&got) {
        let top = edges.iter().map(|(a, b)| a[ell - 1].max(b[ell - 1])).fold(f64::NEG_INFINITY, f64::max);
        let bottom = edges.iter().map(|(a, b)| a[ell].min(b[ell])).fold(f64::INFINITY, f64::min);
        let (lo, hi): (f64, f64) = (row[5].parse().unwrap(), row[6].parse().unwrap());
        assert_eq!(row[..5], ["5", "3", "", &ell.to_string(), row[4].as_str()]);
        assert!((lo - top).abs() < 1e-9 && (hi - bottom).abs() < 1e-9, "ell = {ell}: ({lo}, {hi}) vs ({top}, {bottom})");
        let k: i64 = row[4].parse().unwrap();
        assert_eq!((ell as i64 + 3 * k).rem_euclid(5), 0);
        assert!(2 * k.abs() <= 5);
    }
}

#[test]
fn smoke_suite_passes() {
    let dir = workdir("verify");
    let out = run(&dir, &["verify", "--suite", "smoke", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("out/verify.json")).unwrap()).unwrap();
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["criteria"].as_array().unwrap().len(), 3);
}

#[test]
fn config_errors_exit_two_with_json() {
    let dir = workdir("errors");
    for args in [
        vec!["gaps", "--pq", "3/5", "--tol", "coupling=-1"],
        vec!["gaps", "--tol", "mystery=1"],
        vec!["spectrum", "--potential", "missing.json"],
        vec!["ids", "--E", "2:1:5"],
        vec!["ids", "--set", "no_such_key=3"],
        vec!["gaps", "--pq", "3/0"],
        vec!["lyapunov", "--alpha-convergents", "4"],
        vec!["verify", "--suite", "everything"],
        vec!["butterflies"],
    ] {
        let out = run(&dir, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let e = error_json(&out);
        assert_eq!(e["exit_code"], 2);
        assert_eq!(e["error"]["kind"], "config", "{args:?}");
        assert!(e["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

/// Degree-2 hopping `4cos 2πx + 0.6cos 4πx` with potential `2cos 2πx`.
const PH_OPERATOR: &str = r#"{
    "hopping": {"degree": 2, "coeffs": [[0.3, 0], [2.0, 0], [0, 0], [2.0, 0], [0.3, 0]]},
    "potential": {"degree": 1, "coeffs": [[1.0, 0], [0, 0], [1.0, 0]]}
}"#;

#[test]
fn splitting_of_degree_two_operator() {
    let dir = workdir("splitting");
    std::fs::write(dir.join("ph.json"), PH_OPERATOR).unwrap();
    let out = run(&dir, &["splitting", "--potential", "ph.json", "--pq", "8/13", "--xgrid", "4", "--dump-frames"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("out/splitting.json")).unwrap()).unwrap();
    let e = &doc["energies"][0];
    assert_eq!(e["dims"], serde_json::json!({ "u": 1, "c": 2, "s": 1 }));
    assert_eq!(e["phases"].as_array().unwrap().len(), 4);
    assert!(e["invariance_residual"].as_f64().unwrap() <= 1e-8);
    // four 4×4 complex frames
    assert_eq!(std::fs::metadata(dir.join("out/splitting_frames.bin")).unwrap().len(), 4 * 16 * 16);
}

#[test]
fn coupling_violation_exits_three() {
    let dir = workdir("numeric");
    std::fs::write(dir.join("ph.json"), PH_OPERATOR).unwrap();
    let base = ["blockdiag", "--potential", "ph.json", "--pq", "8/13", "--xgrid", "4"];
    let ok = run(&dir, &base);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("out/blockdiag.json")).unwrap()).unwrap();
    let coupling = doc["energies"][0]["coupling"].as_f64().unwrap();
    assert!(coupling > 0.0 && coupling <= 1e-6);
    let out = run(&dir, &[&base[..], &["--tol", "coupling=1e-300"]].concat());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "numeric");
}

#[test]
fn set_overrides_flags_and_resolved_config_reproduces() {
    let dir = workdir("repro");
    let first = run(&dir, &["gaps", "--alpha-convergents", "5", "--xgrid", "8", "--set", "x_grid=4", "--out", "a"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("a/resolved_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["x_grid"], 4);
    assert_eq!(cfg["frequency"]["kind"], "convergents");
    assert_eq!(cfg["tolerances"]["coupling"], 1e-6);
    let again = run(&dir, &["gaps", "--config", "a/resolved_config.json", "--out", "b"]);
    assert!(again.status.success());
    let a = std::fs::read(dir.join("a/gaps.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.join("b/gaps.csv")).unwrap());
    assert!(rows(&dir.join("a/gaps.csv")).len() > 4);
}

#[test]
fn rotation_and_ids_are_complementary_for_a_periodic_operator() {
    let dir = workdir("rotation");
    let args = ["--pq", "5/8", "--lambda", "1.5", "--E", "-3:3:7"];
    assert!(run(&dir, &[&["rotation"][..], &args].concat()).status.success());
    assert!(run(&dir, &[&["ids", "--set", "volume=800", "--set", "samples=1"][..], &args].concat()).status.success());
    let rho = rows(&dir.join("out/rotation.csv"));
    let n = rows(&dir.join("out/ids.csv"));
    for (r, i) in rho.iter().zip(&n) {
        assert_eq!(r[0], i[0]);
        let (rho, err, ids): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), i[1].parse().unwrap());
        assert!((rho - (1.0 - ids)).abs() <= err + 2.0 / 800.0 + 1e-9, "E = {}: {rho} vs {}", r[0], 1.0 - ids);
    }
}
