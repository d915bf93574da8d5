use std::path::Path;
use std::process::{Command, Output};

use infobound_core::{case_cohort_model, compute_bound, BoundOptions, CaseCohortSpec};
use serde_json::Value;

fn run_cli(dir: &Path, config: &str, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let cfg = dir.join("config.json");
    let out = dir.join("out");
    std::fs::write(&cfg, config).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_infobound"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn bound_config(pi0: f64, route: &str) -> String {
    format!(
        r#"{{"schema_version": 1, "command": "bound", "route": "{route}",
            "case_cohort": {{"p0": 0.1, "theta": 0.6931471805599453, "pi0": {pi0}}},
            "grid": {{"initial_nodes": 60, "refine": false}}}}"#
    )
}

#[test]
fn complete_sampling_gives_unit_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), &bound_config(1.0, "both"), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let routes = doc["routes"].as_array().unwrap();
    assert_eq!(routes.len(), 2);
    for r in routes {
        assert!((r["are"][0].as_f64().unwrap() - 1.0).abs() < 1e-10);
    }
    assert!(doc["route_agreement"].as_f64().unwrap() < 1e-8);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        "{not json",
        r#"{"schema_version": 2, "command": "bound", "case_cohort": {"p0": 0.1, "theta": 0.0, "pi0": 0.1}}"#,
        r#"{"schema_version": 1, "command": "bound", "case_cohort": {"p0": 0.1, "theta": 0.0, "pi0": 0.1}, "typo": 1}"#,
        r#"{"schema_version": 1, "command": "sweep", "case_cohort": {"p0": 0.1, "theta": 0.0, "pi0": 0.1}}"#,
    ] {
        let (o, out) = run_cli(dir.path(), bad, &[]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(!out.exists());
    }
    let (o, out) = run_cli(dir.path(), &bound_config(1.5, "T"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bound_output_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), &bound_config(0.1, "T"), &[]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let spec = CaseCohortSpec::new(0.1, 2f64.ln(), 0.1);
    let (m, d) = case_cohort_model(&spec).unwrap();
    let lib = compute_bound(&m, &d, &BoundOptions { initial_nodes: 60, refine: false, ..Default::default() }).unwrap();
    let r = &doc["routes"][0];
    assert_eq!(r["i_star"][0][0].as_f64().unwrap().to_bits(), lib.report.i_star[0][0].to_bits());
    assert_eq!(r["are"][0].as_f64().unwrap().to_bits(), lib.report.are[0].to_bits());
}

#[test]
fn overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), &bound_config(0.1, "T"), &["--grid-n", "30", "--route", "K"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["routes"][0]["route"], "K");
    assert!(doc["routes"][0]["cells"].as_u64().unwrap() >= 30);
}

const SWEEP: &str = r#"{"schema_version": 1, "command": "sweep", "threads": 2,
    "case_cohort": {"p0": 0.1, "theta": 0.6931471805599453, "pi0": 0.1},
    "grid": {"initial_nodes": 40, "refine": false},
    "sweep": {"axes": [{"param": "pi0", "values": [0.1, 0.5, 1.0]}], "sp": true}}"#;

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), SWEEP, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&out).unwrap();
    let mut rdr = csv::Reader::from_reader(first.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["pi0", "I_star", "I_full", "are_ib", "sp_var", "sp_ratio", "residual", "converged"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r[5].parse::<f64>().unwrap() >= 1.0 - 1e-9);
        assert_eq!(&r[7], "true");
    }
    assert!((rows[2][3].parse::<f64>().unwrap() - 1.0).abs() < 1e-10);

    let (o, out) = run_cli(dir.path(), SWEEP, &["--threads", "1"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out).unwrap(), first);
}

#[test]
fn table1_passes_published_values_through() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema_version": 1, "command": "table1",
        "grid": {"initial_nodes": 30, "refine": false},
        "table1": {"thetas": [0.6931471805599453]}}"#;
    let (o, out) = run_cli(dir.path(), cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 18);
    let hit = rows.iter().find(|r| {
        r[1].parse::<f64>().unwrap() == 0.05 && r[2].parse::<f64>().unwrap() == 0.9 && r[3].parse::<f64>().unwrap() == 0.9
    });
    assert_eq!(hit.unwrap()[6].parse::<f64>().unwrap(), 60.5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("best theta"));
}

fn validate_config(se_multiplier: f64) -> String {
    format!(
        r#"{{"schema_version": 1, "command": "validate", "seed": 11, "route": "both",
            "case_cohort": {{"p0": 0.2, "theta": 0.6931471805599453, "pi0": 0.2}},
            "grid": {{"initial_nodes": 60, "refine": false}},
            "validate": {{"n": 40000, "se_multiplier": {se_multiplier}, "identity_samples": 10}}}}"#
    )
}

#[test]
fn validate_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), &validate_config(4.0), &[]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(o.status.code(), Some(0), "{text}");
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["command"], "validate");
    assert_eq!(doc["n"], 40000);
    assert_eq!(doc["pass"], true);
    let names: Vec<&str> = doc["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["identity_r1_after_d_is_identity", "route_agreement", "mean_k0", "ks_y"] {
        assert!(names.contains(&n), "{n}");
    }
    for c in doc["checks"].as_array().unwrap() {
        for key in ["null", "estimate", "se", "allowed", "pass"] {
            assert!(c.get(key).is_some());
        }
    }
    let (o2, out2) = run_cli(dir.path(), &validate_config(4.0), &[]);
    assert!(o2.status.success());
    assert_eq!(std::fs::read_to_string(out2).unwrap(), text);
}

#[test]
fn zero_tolerance_validation_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_cli(dir.path(), &validate_config(0.0), &[]);
    assert_eq!(o.status.code(), Some(1));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["pass"], false);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        infobound_cli::RunConfig::load(path.to_str().unwrap()).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        count += 1;
    }
    assert!(count >= 8);
}
