use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const RUNNING: &str = r#"{
  "system": {"energies": ["0", "1"], "beta": "1"},
  "ancillas": [{"energies": ["0", "1"], "beta": "2", "unitary": {"kind": "partial_swap", "theta": 0.785398}}]
}"#;

const HAAR_THREE: &str = r#"{
  "system": {"energies": ["0", "1"], "beta": 1},
  "ancillas": [
    {"energies": ["0", "1"], "beta": 0.5, "unitary": {"kind": "haar"}},
    {"energies": ["0", "1"], "beta": 1.5, "unitary": {"kind": "haar"}},
    {"energies": ["0", "1"], "beta": 2.5, "unitary": {"kind": "haar"}}
  ],
  "master_seed": 7
}"#;

fn write_model(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn seqheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqheat")).args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn check<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn validate_running_example() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", RUNNING);
    let out = seqheat(&["validate", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["seed"]["source"], "model");
    let db = check(&r, "detailed_balance[1]");
    assert!(db["details"]["max_relative_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn validate_fails_on_three_member_haar_shells() {
    let dir = TempDir::new().unwrap();
    let doc = r#"{"system": {"energies": ["0", "1", "2"], "beta": 1},
                  "ancillas": [{"energies": ["0", "1", "2"], "beta": 2, "unitary": {"kind": "haar"}}],
                  "master_seed": 3}"#;
    let model = write_model(&dir, "m.json", doc);
    let out = seqheat(&["validate", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(check(&r, "detailed_balance[1]")["passed"], false);
    assert_eq!(check(&r, "gibbs_stationarity[1]")["passed"], true);
    assert_eq!(check(&r, "energy_preservation[1]")["passed"], true);
}

#[test]
fn verify_haar_chain() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", HAAR_THREE);
    let out = seqheat(&["verify", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&out);
    for name in ["joint_ft", "product_relation", "partial_decomposition", "route_equivalence"] {
        assert_eq!(check(&r, name)["passed"], true, "{name}");
    }
    assert!(check(&r, "joint_ft")["details"]["report"]["max_log_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn verify_reports_failing_residual() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", HAAR_THREE);
    let out = seqheat(&["verify", s(&model), "--tolerance", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    let failing: Vec<&Value> = r["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert!(!failing.is_empty());
}

#[test]
fn exact_then_verify_from_files() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", HAAR_THREE);
    for ext in ["csv", "json"] {
        let fwd = dir.path().join(format!("dist.{ext}"));
        let out = seqheat(&["exact", s(&model), "--out", s(&fwd)]);
        assert_eq!(out.status.code(), Some(0));
        let bwd = dir.path().join(format!("dist.backward.{ext}"));
        assert!(bwd.exists());
        let out = seqheat(&["verify", s(&model), "--forward", s(&fwd), "--backward", s(&bwd)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(check(&report(&out), "joint_ft")["details"]["source"], "files");
    }

    // Decimal-only CSV is snapped back onto exact level differences.
    let strip = |name: &str| {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let short: String = text.lines().map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",") + "\n").collect();
        let path = dir.path().join(format!("short.{name}"));
        std::fs::write(&path, short).unwrap();
        path
    };
    let (f, b) = (strip("dist.csv"), strip("dist.backward.csv"));
    let out = seqheat(&["verify", s(&model), "--forward", s(&f), "--backward", s(&b)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // JSON exports record their direction, so swapped files are rejected.
    let (f, b) = (dir.path().join("dist.json"), dir.path().join("dist.backward.json"));
    let out = seqheat(&["verify", s(&model), "--forward", s(&b), "--backward", s(&f)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected forward"));
}

#[test]
fn exact_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", HAAR_THREE);
    let out_path = dir.path().join("dist.csv");
    let first = seqheat(&["exact", s(&model), "--out", s(&out_path)]);
    let a = std::fs::read(&out_path).unwrap();
    let second = seqheat(&["exact", s(&model), "--out", s(&out_path)]);
    let b = std::fs::read(&out_path).unwrap();
    assert_eq!(a, b);
    assert_eq!(first.stdout, second.stdout);
    let header = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "Q_1,Q_2,Q_3,probability,Q_1_exact,Q_2_exact,Q_3_exact");
}

#[test]
fn sample_with_dump() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", RUNNING);
    let dump = dir.path().join("shots.jsonl");
    let out = seqheat(&["sample", s(&model), "--shots", "20000", "--seed", "5", "--workers", "2", "--dump", s(&dump)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["seed"], serde_json::json!({"value": 5, "source": "flag"}));
    assert_eq!(r["shots"], 20000);
    assert!(r["total_variation_to_exact"].as_f64().unwrap() < 0.02);
    let text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(text.lines().count(), 20000);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["shot"], 0);
    assert!(first["heats"][0].is_string());
}

#[test]
fn entropy_command() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", HAAR_THREE);
    let out = seqheat(&["entropy", s(&model)]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let d = &check(&r, "entropy_production")["details"];
    assert!(d["max_pairwise_gap"].as_f64().unwrap() < 1e-9);
    assert!(d["information_form"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(seqheat(&["bogus"]).status.code(), Some(2));
    assert_eq!(seqheat(&[]).status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "bad.json", &RUNNING.replace(r#"["0", "1"], "beta": "1""#, r#"["0", "0"], "beta": "1""#));
    let out = seqheat(&["validate", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("system.energies") && err.contains("levels 0 and 1"), "{err}");

    let model = write_model(&dir, "m.json", HAAR_THREE);
    let out = seqheat(&["verify", s(&model), "--cap", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceed the cap"));
}
