use std::process::Command;

use curlgff::harness::verify::smoke_config;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curlgff"))
}

fn write_config(dir: &std::path::Path, cfg: &curlgff::harness::RunConfig) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, cfg.canonical_json()).unwrap();
    p
}

#[test]
fn dry_run_prints_derived_setup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_config());
    let out = bin()
        .args(["simulate", "--dry-run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["L 8", "N 256", "dt ", "config_hash "] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"n_replicas": 4, "seeed": 1}"#).unwrap();
    let out = bin().args(["analytic", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeed"));
}

#[test]
fn analytic_writes_stamped_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &smoke_config());
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["analytic", "--seed", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("analytic.csv")).unwrap();
    let mut lines = csv.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("# curlgff ") && head.contains("config_hash=") && head.ends_with("seed=5"));
    assert_eq!(lines.next().unwrap(), "x,G_1,G_2,G_3,G_closed,S_3,S_closed");
    let constants: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("constants.json")).unwrap()).unwrap();
    assert!((constants["c"].as_f64().unwrap() - 2.867_758_459_397_317_8).abs() < 1e-12);
    assert_eq!(constants["meta"]["master_seed"], 5);
}

#[test]
fn verify_negative_control_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = smoke_config();
    c.verify.inject_wrong_constant = true;
    let cfg = write_config(dir.path(), &c);
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("v"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(curlgff::harness::EXIT_FAILED));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/verify.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], false);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["criteria"][0]["id"], 1);
    assert!(report["meta"]["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn zero_coupling_simulation_passes_its_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = smoke_config();
    c.model.lambda_hat = 0.0;
    c.n_replicas = 2000;
    c.schedule.t_final = 1.0;
    c.schedule.checkpoints = vec![0.5, 1.0];
    c.grid = Some(curlgff::harness::GridOverride { box_length: 16.0, grid_n: None });
    let cfg = write_config(dir.path(), &c);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.matches("PASS pure diffusion").count(), 2, "{stdout}");
    let moments = std::fs::read_to_string(dir.path().join("s/moments.csv")).unwrap();
    assert!(moments.lines().nth(1).unwrap() == "eps,t,stat,mean,sem,n_samples,flagged_fraction,seed");
}
