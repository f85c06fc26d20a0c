use std::path::Path;
use std::process::{Command, Output};

fn polyprop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyprop"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("run polyprop")
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest.json");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn coeffs_match_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyprop(dir.path(), &["coeffs", "--m", "2", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mut rdr = csv::Reader::from_path(dir.path().join("coeffs.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["j", "re_a_plus", "im_a_plus", "re_a", "im_a", "residual"]);
    let first = rdr.records().next().unwrap().unwrap();
    let re: f64 = first[1].parse().unwrap();
    let im: f64 = first[2].parse().unwrap();
    assert!((re + 0.25).abs() < 1e-12 && (im - 0.25).abs() < 1e-12, "{re} {im}");

    let m = manifest(dir.path());
    assert_eq!(m["command"], "coeffs");
    assert_eq!(m["pass"], true);
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f == "coeffs_b.csv"));
}

#[test]
fn classify_detects_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyprop(dir.path(), &["classify", "--m", "2", "--n", "1", "--potential", "bump_resonant"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("classify.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(report["kind"].as_i64().unwrap() >= 1);
    assert!(dir.path().join("singular_values.csv").exists());

    let alias = polyprop(dir.path(), &["classify", "--m", "2", "--n", "1", "--potential", "paper_resonant"]);
    assert_eq!(alias.status.code(), Some(0));
    let inline = polyprop(dir.path(), &["classify", "--m", "2", "--n", "1", "--potential", r#"{"form":"paper_resonant"}"#]);
    assert_eq!(inline.status.code(), Some(0));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyprop(dir.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(manifest(dir.path())["pass"], true);
}

#[test]
fn kernel_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyprop(dir.path(), &["kernel", "--r-points", "3", "--lambda-points", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("kernel.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["m", "n", "sign", "lambda", "r", "re", "im"]);
    assert_eq!(rdr.records().count(), 2 * 3 * 2);
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(polyprop(dir.path(), &["coeffs", "--bogus"]).status.code(), Some(2));
    assert_eq!(polyprop(dir.path(), &["coeffs", "--tol", "nonsense=1e-3"]).status.code(), Some(2));
    assert_eq!(polyprop(dir.path(), &["coeffs", "--n", "2"]).status.code(), Some(2));
    assert_eq!(polyprop(dir.path(), &["coeffs", "--tol", "phase=-1"]).status.code(), Some(2));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"m": 1, "n": 3}"#).unwrap();
    let out = polyprop(dir.path(), &["coeffs", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["config"]["m"], 1);
    assert_eq!(m["config"]["n"], 3);

    std::fs::write(&cfg, r#"{"m": 1, "colour": "red"}"#).unwrap();
    let out = polyprop(dir.path(), &["coeffs", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
