use std::fs;
use std::process::Command;

fn qgeo() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qgeo"));
    c.env_remove("QGEO_THREADS");
    c
}

#[test]
fn propagate_writes_snapshots_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "t_final = 200\n# short run\nensemble.n_traj = 10\n").unwrap();
    let out = dir.path().join("out");
    let status = qgeo()
        .args(["propagate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .args(["--snapshot-every", "50", "--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let header = fs::read_to_string(out.join("psi_t50.csv")).unwrap();
    assert!(header.starts_with("x,re_psi,im_psi,abs_psi\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["snapshot_every"], 50.0);

    let ok = qgeo().args(["validate", "--config"]).arg(&cfg).arg("--out-dir").arg(&out).status().unwrap();
    assert_eq!(ok.code(), Some(0));
    fs::write(out.join("psi_t50.csv"), "tampered").unwrap();
    let bad = qgeo().args(["validate", "--config"]).arg(&cfg).arg("--out-dir").arg(&out).status().unwrap();
    assert_eq!(bad.code(), Some(3));
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let status = qgeo()
        .args(["trajectories", "--format", "json", "--set", "t_final=100", "--set", "ensemble.n_traj=4", "--out-dir"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("trajectories_first_order.json")).unwrap()).unwrap();
    assert!(rows.as_array().unwrap().len() > 4);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dt = -1\n").unwrap();
    let code = qgeo().args(["validate", "--config"]).arg(&cfg).status().unwrap().code();
    assert_eq!(code, Some(2));
    let missing = qgeo().args(["propagate", "--config", "/nonexistent/qgeo.cfg"]).status().unwrap().code();
    assert_eq!(missing, Some(2));
    let env = qgeo().env("QGEO_THREADS", "zero").args(["propagate", "--set", "t_final=100"]).status().unwrap().code();
    assert_eq!(env, Some(2));
}

#[test]
fn numerical_failure_exits_three_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let code =
        qgeo().args(["propagate", "--set", "packet.q_c=-19.5", "--out-dir"]).arg(dir.path()).status().unwrap().code();
    assert_eq!(code, Some(3));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
}
