use std::fs;
use std::process::Command;

fn effcap(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_effcap"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn sweep_writes_csv_and_sidecar_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "experiment = \"ec_vs_epsilon\"\nsnr2_db_grid = [3.0, 6.0]\nepsilon_grid = [0.05, 0.5, 1.0]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--time-unit",
        "second",
        "--threads",
        "2",
    ];
    let o = effcap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("ec_vs_epsilon.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[col("time_unit")], "second");
        assert_eq!(f[col("status")], "ok");
        let asym: f64 = f[col("rate_asym")].parse().unwrap();
        let sym: f64 = f[col("rate_sym")].parse().unwrap();
        assert!(asym >= sym);
    }
    let last: Vec<&str> = lines[6].split(',').collect();
    assert_eq!(last[col("case")], "unconstrained");

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ec_vs_epsilon.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["time_unit"], "second");
    assert_eq!(meta["spec"]["threads"], 2);

    let o = effcap(&args);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(out.join("ec_vs_epsilon.csv")).unwrap(),
        csv
    );
}

#[test]
fn failing_points_are_reported_and_kept() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.toml");
    // d = 0.3 makes the relay hop weaker on average than the source hop.
    fs::write(
        &cfg,
        "experiment = \"ec_vs_d\"\nsnr2_db_grid = [3.0]\nd_grid = [0.3, 0.6]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = effcap(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 0") && err.contains("unstable"), "{err}");
    let csv = fs::read_to_string(out.join("ec_vs_d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().contains(",error,"));
    assert!(csv.lines().nth(2).unwrap().contains(",ok,"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ec_vs_d.json")).unwrap()).unwrap();
    assert_eq!(meta["failures"][0]["solver"], "effcap_delay_constrained");
    assert_eq!(meta["failures"][0]["point"]["d"], 0.3);
}

#[test]
fn bad_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "experiment = \"ec_vs_snr2\"\nsnr2_db_grid = [1.0,\n").unwrap();
    let o = effcap(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml") && err.contains("line"), "{err}");

    let o = effcap(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--time-unit",
        "fortnight",
    ]);
    assert!(!o.status.success());
}

#[test]
fn worked_example_constants_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "experiment = \"appendix_d_constants\"\n").unwrap();
    let out = dir.path().join("out");
    let o = effcap(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("appendix_d_constants.csv")).unwrap();
    assert!(csv.starts_with("convention,theta1_th,theta2_th,bb_theta1,vv_theta1,uu_theta1"));
    assert_eq!(csv.lines().count(), 3);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("appendix_d_constants.json")).unwrap())
            .unwrap();
    assert!(meta["extra"]["matched_conventions"].is_array());
}
