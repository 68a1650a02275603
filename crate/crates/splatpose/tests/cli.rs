mod common;

use std::path::Path;
use std::process::{Command, Output};

use splatpose::io;

fn splatpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatpose")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    io::write_json(&path, &common::small_config()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(splatpose(&["run", "--config", &cfg, "--out", out, "--views", "0"]).status.code(), Some(2));
    assert_eq!(splatpose(&["run", "--config", &cfg]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(splatpose(&["run", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
}

#[test]
fn report_without_runs_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = splatpose(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metrics.csv"));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let status = splatpose(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "2"]).status;
    assert!(status.success());
    assert!(out.join("metrics.csv").is_file());
    assert!(out.join("cases").join("full-v3-s1").join("object.ply").is_file());

    let rep = splatpose(&["report", out.to_str().unwrap()]);
    assert!(rep.status.success());
    let table = String::from_utf8(rep.stdout).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("| box ")).count(), 2);
}

#[test]
fn stage_commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let stages: [(&str, &[&str]); 4] = [
        ("simulate", &["scene.json", "gt_poses.json", "object.ply", "frames/frame_000.png"]),
        ("init", &["alignment.json", "prior_cloud.ply", "prior/view_0.png"]),
        ("track", &["poses.csv", "graph.json"]),
        ("eval", &["metrics.csv", "metrics.json", "poses.csv"]),
    ];
    for (stage, files) in stages {
        let out = dir.path().join(stage);
        let res = splatpose(&[stage, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{stage}: {}", String::from_utf8_lossy(&res.stderr));
        for f in files {
            assert!(out.join(f).is_file(), "{stage} did not write {f}");
        }
    }
}
