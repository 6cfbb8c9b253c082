use std::path::{Path, PathBuf};

use serde_json::Value;

use super::scenario::{Prepared, Scenario};
use super::*;

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn load(name: &str, out: &Path) -> Scenario {
    let mut s = parse_scenario(&std::fs::read_to_string(shipped(name)).unwrap()).unwrap();
    s.output.dir = Some(out.to_string_lossy().into_owned());
    s
}

fn cli(args: &[&str]) -> i32 {
    let mut v = vec!["nbody-hkam"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn malformed_scenario_exits_3_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"system": {"masses": [1, 1], "dim": 2, "kappa": 0.5}, "task": "phi""#).unwrap();
    let out = dir.path().join("out");
    let code = cli(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(!out.exists());
}

#[test]
fn unknown_task_and_option_keys_are_validation_errors() {
    let text = r#"{"system": {"masses": [1, 1], "dim": 2, "kappa": 0.5}, "task": "orbit"}"#;
    assert_eq!(parse_scenario(text).unwrap_err().code, EXIT_VALIDATION);
    let text = r#"{"system": {"masses": [1, 1], "dim": 2, "kappa": 0.5}, "task": "phi",
                   "options": {"x": "origin", "y": "kepler", "bogus": 1}}"#;
    let s = parse_scenario(text).unwrap();
    assert!(matches!(Prepared::new(s), Err(Error::Validation(_))));
    let text = r#"{"system": {"masses": [1, 1], "dim": 2, "kappa": 0.5}, "task": "phi",
                   "options": {"action": {"nodes": 1}}}"#;
    let s = parse_scenario(text).unwrap();
    assert!(matches!(Prepared::new(s), Err(Error::Validation(_))));
    let text = r#"{"system": {"masses": [1, 1], "dim": 2, "kappa": 1.0}, "task": "ejection"}"#;
    let err = run_scenario(parse_scenario(text).unwrap()).unwrap_err();
    assert_eq!(err.code, EXIT_VALIDATION);
}

#[test]
fn shipped_minimizing_scenario_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(load("three_body_minimizing.json", dir.path())).unwrap();
    assert_eq!(r.code, EXIT_OK);
    let rows = csv_rows(&dir.path().join("three_body_minimizing.csv"));
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let want = if &row[0] == "lagrange" {
            "consistent-minimizing"
        } else {
            "non-minimizing"
        };
        assert_eq!(&row[6], want, "{row:?}");
    }
}

#[test]
fn ejection_echoes_newtonian_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped("lagrange.json");
    let out = dir.path().to_str().unwrap();
    let code = cli(&["ejection", "--kappa", "0.5", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code, EXIT_OK);
    let j = read_json(&dir.path().join("ejection.json"));
    let u = j["U"].as_f64().unwrap();
    // equilateral unit masses on the inertia sphere: side 1, U = 3
    assert!((u - 3.0).abs() < 1e-12);
    assert!((j["c"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let alpha = (4.5 * u).powf(1.0 / 3.0);
    assert!((j["alpha"].as_f64().unwrap() - alpha).abs() < 1e-12);
    assert!((j["t_s"].as_f64().unwrap() - alpha.powf(-1.5)).abs() < 1e-12);
    assert!((j["psi"].as_f64().unwrap() - 2.0 * (2.0 * u).sqrt()).abs() < 1e-12);
    for s in j["samples"].as_array().unwrap() {
        assert!(s["newton_residual"].as_f64().unwrap() < 1e-10);
    }
    assert!(dir.path().join("ejection.manifest.json").exists());
}

#[test]
fn manifest_reruns_to_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_scenario(load("kepler_phi.json", a.path())).unwrap();
    let manifest = a.path().join("kepler_phi.manifest.json");
    let m = read_json(&manifest);
    // defaults are written out, so the manifest alone fixes the run
    assert!(m["scenario"]["options"]["action"]["gtol"].is_number());
    assert_eq!(m["inputs_sha256"].as_str().unwrap().len(), 64);
    let code = cli(&["run", manifest.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let again = read_json(&b.path().join("kepler_phi.manifest.json"));
    assert_eq!(m["inputs_sha256"], again["inputs_sha256"]);
    assert_eq!(m["outputs"], again["outputs"]);
    for f in ["kepler_phi.json", "kepler_phi_path.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    assert_eq!(first.written.len(), 3);
}

#[test]
fn csv_numbers_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(load("kepler_phi.json", dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("kepler_phi_path.csv")).unwrap();
    assert!(!text.contains('\r'));
    for field in text.lines().nth(1).unwrap().split(',') {
        let (mant, _) = field.split_once('e').unwrap();
        let digits = mant.chars().filter(|c| c.is_ascii_digit()).count();
        assert_eq!(digits, 17, "{field}");
    }
}

#[test]
fn non_convergence_exits_2_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load("kepler_ray_weak_kam.json", dir.path());
    s.options["max_sweeps"] = 1.into();
    let r = run_scenario(s).unwrap();
    assert_eq!(r.code, EXIT_CONVERGENCE);
    let m = read_json(&dir.path().join("kepler_ray.manifest.json"));
    assert_eq!(m["status"], "convergence-failure");
    assert!(dir.path().join("kepler_ray.csv").exists());
}

#[test]
fn central_find_depends_only_on_the_seed() {
    let run = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        let mut s = load("three_body_central_find.json", dir.path());
        s.options["random_seeds"] = 4.into();
        s.seed = seed;
        run_scenario(s).unwrap();
        std::fs::read(dir.path().join("three_body_central.csv")).unwrap()
    };
    let a = run(7);
    assert_eq!(a, run(7));
    assert_ne!(a, run(8));
}

#[test]
fn kepler_wave_flow_ends_at_its_maximum() {
    let text = r#"{"system": {"masses": [1, 1], "dim": 2, "kappa": 0.5}, "task": "flow",
                   "options": {"field": {"kind": "kepler-wave", "phase": 1.0}, "samples": 8}}"#;
    let dir = tempfile::tempdir().unwrap();
    let mut s = parse_scenario(text).unwrap();
    s.output.dir = Some(dir.path().to_string_lossy().into_owned());
    let r = run_scenario(s).unwrap();
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.summary["hypotheses_hold"], true);
    let rep = read_json(&dir.path().join("flow.json"));
    for l in rep["labels"].as_array().unwrap() {
        // no collisions on the two-body circle: every ascent ends at the crest
        assert!(l.is_null() || l == "critical", "{l}");
    }
}

#[test]
fn kepler_wave_calibration_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(load("kepler_calibrate.json", dir.path())).unwrap();
    assert_eq!(r.code, EXIT_OK);
    assert!(r.summary["max_newton_residual"].as_f64().unwrap() <= 1e-6);
    assert!(r.summary["max_energy_residual"].as_f64().unwrap() <= 1e-6);
    assert_eq!(r.summary["v_violations"], 0);
    let rows = csv_rows(&dir.path().join("kepler_calibrate.csv"));
    assert_eq!(rows.len(), 101);
}

#[test]
fn selftest_report_formats() {
    let r = selftest::Report {
        checks: vec![selftest::Check {
            name: "demo",
            pass: false,
            value: 0.5,
            bound: "<= 1, strict".into(),
        }],
    };
    assert!(!r.all_pass());
    assert!(r.text().starts_with("FAIL demo: 5.000000e-1"));
    let csv = String::from_utf8(r.csv()).unwrap();
    assert!(csv.contains("\"<= 1, strict\""));
}
