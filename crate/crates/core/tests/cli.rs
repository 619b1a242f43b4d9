//! End-to-end runs of the binary: exit codes, manifests, failure markers and
//! output-directory resolution.

use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_navier-cpi"));
    c.env_remove("NAVIER_CPI_OUT");
    c
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn constants_succeeds_with_manifest() {
    let t = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["constants", "--dim", "6", "--out"])
        .arg(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout["n"], 6);
    let m = json(&t.path().join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert!(m["seed"].is_u64());
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["versions"]["navier-cpi"].is_string());
    let outs = m["outputs"].as_array().unwrap();
    assert!(outs.iter().any(|o| o["name"] == "constants.json"));
    assert!(!t.path().join("FAILED").exists());
}

#[test]
fn unknown_field_is_a_validation_failure() {
    let t = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["enumerate-cpi", "--k-field", "nope", "--out"])
        .arg(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("single-bump"), "{err}");
    let marker = json(&t.path().join("FAILED"));
    assert_eq!(marker["exit_code"], 2);
    assert_eq!(json(&t.path().join("manifest.json"))["status"], "failed");
}

#[test]
fn low_dimension_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["constants", "--dim", "4", "--out"])
        .arg(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_failure_exits_3_and_keeps_partial_output() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.toml");
    fs::write(&cfg, "k_field = \"single-bump\"\node_max_steps = 3\n").unwrap();
    let init = t.path().join("init.json");
    fs::write(
        &init,
        r#"{"bubbles": [{"a": [0.3, 0, 0, 0, 0, 0, 0], "lambda": 30}]}"#,
    )
    .unwrap();
    let out = t.path().join("out");
    let o = bin()
        .args(["flow", "--config"])
        .arg(&cfg)
        .arg("--init")
        .arg(&init)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("FAILED").exists());
    assert_eq!(json(&out.join("manifest.json"))["exit_code"], 3);
}

#[test]
fn success_clears_a_stale_marker() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("FAILED"), "{}").unwrap();
    let o = bin()
        .args(["constants", "--out"])
        .arg(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(!t.path().join("FAILED").exists());
}

#[test]
fn output_dir_resolution() {
    let t = tempfile::tempdir().unwrap();
    let env_dir = t.path().join("from-env");
    let o = bin()
        .arg("constants")
        .env("NAVIER_CPI_OUT", &env_dir)
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_dir.join("manifest.json").exists());

    // The config key beats the environment, the flag beats both.
    let cfg = t.path().join("cfg.toml");
    fs::write(
        &cfg,
        format!(
            "output_dir = {:?}\n",
            t.path().join("from-config").display().to_string()
        ),
    )
    .unwrap();
    bin()
        .arg("constants")
        .arg("--config")
        .arg(&cfg)
        .env("NAVIER_CPI_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(t.path().join("from-config/manifest.json").exists());
    let flag = t.path().join("from-flag");
    bin()
        .arg("constants")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&flag)
        .output()
        .unwrap();
    assert!(flag.join("manifest.json").exists());

    let o = bin()
        .arg("constants")
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(t.path().join("navier-cpi-out/manifest.json").exists());
}

#[test]
fn bad_config_files() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.toml");
    fs::write(&cfg, "dimension = 7\n").unwrap();
    let o = bin()
        .args(["constants", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension"));
    fs::write(&cfg, "dim = \"seven\"\n").unwrap();
    assert_eq!(
        code(
            &bin()
                .args(["constants", "--config"])
                .arg(&cfg)
                .output()
                .unwrap()
        ),
        2
    );
    let missing = t.path().join("missing.toml");
    assert_eq!(
        code(
            &bin()
                .args(["constants", "--config"])
                .arg(&missing)
                .output()
                .unwrap()
        ),
        2
    );
}

#[test]
fn bad_inputs() {
    let t = tempfile::tempdir().unwrap();
    let init = t.path().join("init.json");
    fs::write(
        &init,
        r#"{"bubbles": [{"a": [1.2, 0, 0, 0, 0, 0, 0], "lambda": 30}]}"#,
    )
    .unwrap();
    let o = bin()
        .arg("flow")
        .arg("--init")
        .arg(&init)
        .arg("--out")
        .arg(t.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    fs::write(&init, "not json").unwrap();
    let o = bin()
        .arg("flow")
        .arg("--init")
        .arg(&init)
        .arg("--out")
        .arg(t.path().join("p"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["green", "--probe", "x=1;y=2"])
        .arg("--out")
        .arg(t.path().join("q"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 2);
}

#[test]
fn green_probe_and_rerun() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let o = bin()
        .args(["green", "--dim", "6", "--probe", "0.1,-0.3", "--out"])
        .arg(&a)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&a.join("green.json"));
    assert!(g["G"].as_f64().unwrap() > 0.0, "{g}");

    let b = t.path().join("b");
    let o = bin()
        .args(["rerun", "--manifest"])
        .arg(a.join("manifest.json"))
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(a.join("green.json")).unwrap(),
        fs::read(b.join("green.json")).unwrap()
    );

    // A tampered manifest no longer matches its hash.
    let mut m = json(&a.join("manifest.json"));
    m["config"]["dim"] = 8.into();
    let bad = t.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&m).unwrap()).unwrap();
    let o = bin()
        .args(["rerun", "--manifest"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn decompose_synthetic_field() {
    let t = tempfile::tempdir().unwrap();
    let field = t.path().join("field.json");
    fs::write(
        &field,
        r#"{"synthetic": [{"alpha": 1.0, "a": [0.1, 0, 0, 0, 0, 0, 0], "lambda": 40}]}"#,
    )
    .unwrap();
    let cfg = t.path().join("cfg.toml");
    fs::write(&cfg, "decompose_bubbles = 1\n").unwrap();
    let out = t.path().join("o");
    let o = bin()
        .arg("decompose")
        .arg("--config")
        .arg(&cfg)
        .arg("--field")
        .arg(&field)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("decompose.json").exists());
    let m = json(&out.join("manifest.json"));
    assert!(m["inputs"]["field"]["sha256"].is_string());
}
