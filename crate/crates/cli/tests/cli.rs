use std::path::Path;
use std::process::{Command, Output};

fn polydg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polydg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("study.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const QUADRATIC: &str = r#"
degrees = [2]
[problem]
name = "custom"
terms = [[1.0, 2, 0], [-0.5, 1, 1], [2.0, 0, 0]]
[mesh]
family = "voronoi"
sizes = [8, 16]
lloyd_iters = 10
"#;

#[test]
fn study_writes_tables_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUADRATIC);
    let out = dir.path().join("out");
    let o = polydg(&["--config", &cfg, "--out", out.to_str().unwrap(), "study"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rates_p2.csv", "study.json", "rates.gp"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("rates_p2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("study.json")).unwrap()).unwrap();
    let case = &json["studies"][0]["cases"][0];
    assert_eq!(case["penalty"]["c_sigma"], 10.0);
    assert!(case["metrics"]["c_s"].as_f64().unwrap() > 0.0);
    assert!(case["errors"]["err_dg"].as_f64().unwrap() < 1e-8);
}

#[test]
fn failed_solves_exit_nonzero_and_keep_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    // the arbitrary-face regime rejects p = 4 unless explicitly allowed
    let body = QUADRATIC.replace("degrees = [2]", "degrees = [2, 4]") + "[penalty]\nregime = \"arbitrary\"\n";
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = polydg(&["study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("rates_p2.csv").exists());
    assert!(out.join("study.json").exists());
}

#[test]
fn identical_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &QUADRATIC.replace("custom", "example1"));
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = polydg(&["study", "--config", &cfg, "--threads", "2", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        tables.push(std::fs::read(out.join("rates_p2.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn generated_mesh_round_trips_through_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("m.mesh");
    let m = mesh.to_str().unwrap();
    assert!(polydg(&["mesh", "generate", "--cells", "12", "--seed", "3", "--out", m]).status.success());
    let o = polydg(&["mesh", "inspect", m]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"], 12);
    assert!(v["metrics"]["c_r"].as_f64().unwrap() >= 2.0);

    let agg = dir.path().join("a.mesh");
    let o = polydg(&["mesh", "agglomerate", "--cells", "6", "--input", m, "--out", agg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&polydg(&["mesh", "inspect", agg.to_str().unwrap()]).stdout).unwrap();
    assert_eq!(v["cells"], 6);
}

#[test]
fn psweep_flags_exact_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUADRATIC);
    let out = dir.path().join("p");
    let o = polydg(&["psweep", "--config", &cfg, "--degrees", "2,3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("psweep.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
}

#[test]
fn verify_passes_on_a_single_square() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("\"voronoi\"", "\"triangles\"").replace("[8, 16]", "[1]");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("v");
    let o = polydg(&["verify", "--config", &cfg, "--triangles", "20", "--p-max", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let reports: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
    assert!(!out.join("witness.json").exists());
}

#[test]
fn missing_config_is_an_error() {
    let o = polydg(&["study"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}
