use std::path::Path;
use std::process::{Command, Output};

use merp_core::avatar::FidelityReport;
use merp_core::hid::read_event_log;
use merp_core::synth::TrajectoryBuilder;

fn merp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_merp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("merp runs")
}

fn ok(args: &[&str]) -> String {
    let out = merp(args);
    assert!(
        out.status.success(),
        "merp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_trajectory(dir: &Path) -> std::path::PathBuf {
    let traj = TrajectoryBuilder::new(100.0, 0.0, 0.0, 0.0)
        .hold(0.5)
        .turn(25.0, 0.5)
        .hold(0.2)
        .walk(2.0, 0.0, 2.0, 2)
        .hold(0.5)
        .build();
    let p = dir.join("walk.traj");
    std::fs::write(&p, traj.to_text()).unwrap();
    p
}

#[test]
fn replaying_a_recording_twice_gives_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let traj = write_trajectory(dir.path());
    let frames = dir.path().join("walk.frames");
    ok(&["synth", path(&traj), "--out", path(&frames), "--noise", "0.02", "--seed", "3"]);

    let a = dir.path().join("a.log");
    let b = dir.path().join("b.log");
    let summary = ok(&["replay", path(&frames), "--out", path(&a)]);
    ok(&["replay", path(&frames), "--out", path(&b)]);
    let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);

    let events = read_event_log(a.as_slice()).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["events"], events.len());
    assert_eq!(summary["decoder"]["lost"], 0);
}

#[test]
fn simulate_writes_a_fidelity_report() {
    let dir = tempfile::tempdir().unwrap();
    let traj = write_trajectory(dir.path());
    let cfg = dir.path().join("merp.toml");
    std::fs::write(
        &cfg,
        "[calibration]\nmouse_factor_px = 1000.0\n\n[sensitivity]\npixels_per_degree = 17.453292519943297\nspeed_mps = 1.0\n\n[world]\nroom_width_m = 100.0\nroom_depth_m = 100.0\n",
    )
    .unwrap();
    let report = dir.path().join("report.json");
    ok(&["simulate", path(&traj), "--report", path(&report), "--config", path(&cfg), "--wire"]);
    let r: FidelityReport = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!((r.truth_turn_deg - 25.0).abs() < 1e-9);
    assert!(r.yaw_error_rel.unwrap() <= 0.01, "{r:?}");
    assert!((r.avatar_distance_m - 2.0).abs() < 0.02, "{r:?}");
}

#[test]
fn bench_reports_and_refuses_zero_samples() {
    let out = ok(&["bench", "--samples", "2000", "--json"]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["samples"], 2000);
    assert_eq!(r["metrics"]["frames_received"], 2000);
    assert_eq!(r["metrics"]["frames_lost"], 0);

    let out = merp(&["bench", "--samples", "0"]);
    assert!(!out.status.success());
}

#[test]
fn calibrate_finds_the_bias_of_a_still_recording() {
    let dir = tempfile::tempdir().unwrap();
    let traj = TrajectoryBuilder::new(100.0, 0.0, 0.0, 123.0).hold(3.0).build();
    let tp = dir.path().join("still.traj");
    std::fs::write(&tp, traj.to_text()).unwrap();
    let frames = dir.path().join("still.frames");
    ok(&["synth", path(&tp), "--out", path(&frames), "--raw", "--noise", "0.05", "--seed", "9"]);

    let out = ok(&["calibrate", "--source", path(&frames), "--samples", "250", "--yes"]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["samples"], 250);
    assert!(r["bias_x"].as_f64().unwrap().abs() < 0.02);
    assert!(r["bias_y"].as_f64().unwrap().abs() < 0.02);
    let std = r["noise_std"].as_f64().unwrap();
    assert!((std - 0.05).abs() < 0.01, "{std}");
    assert!((r["heading_deg"].as_f64().unwrap() - 123.0).abs() < 0.01);

    // more samples than the recording holds
    let out = merp(&["calibrate", "--source", path(&frames), "--samples", "100000", "--yes"]);
    assert!(!out.status.success());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[calibration]\nmouse_factor_px = -5.0\n").unwrap();
    let out = merp(&["bench", "--samples", "10", "--config", path(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}

#[test]
fn shipped_example_files_work() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let cfg = root.join("merp.example.toml");
    ok(&["bench", "--samples", "100", "--config", path(&cfg)]);

    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let traj = root.join("data/walk_and_turn.traj");
    ok(&["simulate", path(&traj), "--report", path(&report), "--config", path(&cfg)]);
}
