use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csforge"))
}

fn small_config() -> String {
    r#"{
        "experiment": "smoke", "N": 8, "K": 2, "rho": 0.3, "sigma_w": 0.2,
        "g": 1.0, "P_dB": 3.0, "M": [3, 4], "trials": 8, "seed": 5,
        "setup": "single", "designs": ["tight_frame", "gaussian"],
        "decoder": "oracle", "sweep_axis": "M"
    }"#
    .to_string()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["selftest", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = bin().arg("selftest").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.ends_with("pass")));
}

#[test]
fn evaluate_rejects_zero_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let out = bin()
        .args(["evaluate", "--config", cfg.to_str().unwrap(), "--trials", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"error\""), "stderr not machine-readable: {}", err);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config().replace("\"seed\": 5", "\"seed\": 5, \"zz\": 1")).unwrap();
    let out = bin().args(["sweep", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_emits_csv_with_exact_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let out = bin()
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("smoke.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,setup,design,decoder,axis_name,axis_value,M,P_dB,CSNR,trials,seed,nmse_db,support_recovery,lb_db,wall_ms"
    );
    assert_eq!(lines.count(), 4);
    // Sidecar carries the resolved config for audit.
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("smoke.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["config"]["N"], 8);
    assert_eq!(sidecar["records"].as_array().unwrap().len(), 4);
    // Stdout mirrors the CSV.
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
}

#[test]
fn evaluate_runs_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let out = bin().args(["evaluate", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // Two designs at the first axis value only.
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
}

#[test]
fn design_emits_matrix_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let out = bin()
        .args([
            "design",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("smoke_tight_frame.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "3,8,tight_frame");
    assert_eq!(lines.count(), 3);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let run = |seed: &str| {
        let out = bin()
            .args(["sweep", "--config", cfg.to_str().unwrap(), "--seed", seed])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        String::from_utf8_lossy(&out.stdout).to_string()
    };
    let a = run("5");
    let b = run("5");
    let c = run("6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}
