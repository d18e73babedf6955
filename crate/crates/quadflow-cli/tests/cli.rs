//! End-to-end tests of the `quadflow` binary: exit codes, artifact layout,
//! determinism, and the golden derivation text.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, doc: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

fn run(subcommand: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadflow"))
        .arg(subcommand)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn scalar_riccati_config() -> serde_json::Value {
    serde_json::json!({
        "kind": "riccati",
        "model": { "h": [[[0.0, 0.0]]], "l": [[[0.0, 0.0]]], "t_end": 1.0 },
        "cost": {
            "q": [[[1.0, 0.0]]],
            "r": [[[1.0, 0.0]]],
            "q_terminal": [[[0.0, 0.0]]]
        },
        "grid": { "steps": 2000 }
    })
}

// ---- happy path ----

#[test]
fn riccati_run_writes_csv_report_and_manifest() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", scalar_riccati_config());
    let out = dir.path().join("out");
    let output = run("riccati", &config, &out);
    assert!(output.status.success(), "{output:?}");

    let csv = fs::read_to_string(out.join("riccati.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,i,j,pi_re,pi_im,r_re,r_im");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let pi0: f64 = first[3].parse().unwrap();
    assert!((pi0 - 1.0f64.tanh()).abs() < 1e-8, "pi(0) = {pi0}");

    let report = fs::read_to_string(out.join("riccati_report.txt")).unwrap();
    for field in [
        "max_asymmetry",
        "min_eigenvalue",
        "noise_residual_dA",
        "noise_residual_dAdag",
    ] {
        assert!(report.contains(field), "missing {field} in {report}");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "riccati");
    assert_eq!(manifest["config"]["grid"]["steps"], 2000);
    let outputs: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(outputs, ["riccati.csv", "riccati_report.txt"]);
    // No orphan artifacts: everything in the directory is listed or the
    // manifest itself.
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(
            name == "manifest.json" || outputs.contains(&name),
            "orphan artifact {name}"
        );
    }
}

#[test]
fn identical_configs_produce_byte_identical_numeric_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "probe.json",
        serde_json::json!({
            "kind": "probe-optimality",
            "seed": 11,
            "model": { "h": [[[0.0, 0.0]]], "l": [[[0.0, 0.0]]], "t_end": 1.0 },
            "state": { "xi0": [[1.0, 0.0]] },
            "x": [[[1.0, 0.0]]],
            "grid": { "steps": 300 },
            "epsilons": [0.1, 0.01],
            "trials": 2
        }),
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(run("probe-optimality", &config, &out_a).status.success());
    assert!(run("probe-optimality", &config, &out_b).status.success());
    for name in ["probe.csv", "probe_report.txt"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn output_directory_can_come_from_the_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("from-config");
    let mut doc = scalar_riccati_config();
    doc["output"] = serde_json::Value::String(out.display().to_string());
    doc["grid"]["steps"] = serde_json::json!(50);
    let config = write_config(dir.path(), "run.json", doc);
    let output = Command::new(env!("CARGO_BIN_EXE_quadflow"))
        .arg("riccati")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    assert!(out.join("riccati.csv").exists());
}

// ---- golden derivation ----

#[test]
fn derive_reproduces_the_library_rendering_and_frozen_lines() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "derive.json", serde_json::json!({"kind": "derive"}));
    let out = dir.path().join("out");
    assert!(run("derive", &config, &out).status.success());

    let text = fs::read_to_string(out.join("flow_equation.txt")).unwrap();
    let expected =
        quadflow_core::ito::flow_equation_text(&quadflow_core::ito::ItoTable::boson_fock())
            .unwrap();
    assert_eq!(text, expected);
    // Frozen inner coefficient forms: drift commutator/dissipator pieces and
    // both noise commutators.
    for line in [
        "  1i | 1 | H X",
        "  -0.5 | 1 | L* L X",
        "  1 | 1 | L* X L",
        "  1 | 1 | L* X",
        "  -1 | 1 | X L*",
        "  -1 | 1 | L X",
        "  1 | 1 | X L",
    ] {
        assert!(text.contains(line), "missing frozen line {line:?} in {text}");
    }

    let report = fs::read_to_string(out.join("derivation_report.txt")).unwrap();
    assert!(report.contains("unitarity_preserved = true"));
    assert!(!report.contains("cancelled = false"), "{report}");
}

// ---- validation failures: exit 1, nothing written ----

#[test]
fn malformed_matrix_literal_exits_one_without_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let mut doc = scalar_riccati_config();
    doc["model"]["h"] = serde_json::json!([[[0.0, 0.0], [0.0, 0.0]]]); // 1x2 row
    let config = write_config(dir.path(), "bad.json", doc);
    let out = dir.path().join("out");
    let output = run("riccati", &config, &out);
    assert_eq!(output.status.code(), Some(1));
    assert!(!out.exists(), "validation failure must not create outputs");
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error: validation:"), "stderr: {stderr}");
}

#[test]
fn kind_subcommand_mismatch_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", scalar_riccati_config());
    let out = dir.path().join("out");
    let output = run("simulate", &config, &out);
    assert_eq!(output.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = TempDir::new().unwrap();
    let mut doc = scalar_riccati_config();
    doc["grids"] = doc["grid"].take();
    let config = write_config(dir.path(), "typo.json", doc);
    let out = dir.path().join("out");
    let output = run("riccati", &config, &out);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("grids"), "stderr: {stderr}");
}

// ---- numerical failures: exit 2, diagnostics written ----

#[test]
fn blow_up_exits_two_and_still_writes_diagnostics() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "blowup.json",
        serde_json::json!({
            "kind": "riccati",
            "model": {
                "h": [[[0.0, 0.0]]], "l": [[[0.0, 0.0]]], "t_end": 1.0,
                "coefficients": {
                    "drift": [[[10.0, 0.0]]],
                    "input": [[[0.0, 0.0]]],
                    "annihilation": [[[0.0, 0.0]]],
                    "creation": [[[0.0, 0.0]]]
                }
            },
            "cost": {
                "q": [[[1.0, 0.0]]],
                "r": [[[1.0, 0.0]]],
                "q_terminal": [[[0.0, 0.0]]]
            },
            "grid": { "steps": 400 }
        }),
    );
    let out = dir.path().join("out");
    let output = run("riccati", &config, &out);
    assert_eq!(output.status.code(), Some(2));
    let failure = fs::read_to_string(out.join("failure.txt")).unwrap();
    assert!(failure.contains("blow-up"), "{failure}");
    assert!(out.join("manifest.json").exists());
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.starts_with("error: numerical:"), "stderr: {stderr}");
}
