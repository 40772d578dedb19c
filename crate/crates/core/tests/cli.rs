//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn pitaevskii(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pitaevskii"))
        .args(args)
        .current_dir(dir)
        .env("PITAEVSKII_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) {
    assert_eq!(pitaevskii(dir, &["init", "cfg.toml"]).status.code(), Some(0));
    let text = std::fs::read_to_string(dir.join("cfg.toml")).unwrap();
    let text = text.replace("n = 32", "n = 16").replace("t_end = 5.0", "t_end = 0.05");
    std::fs::write(dir.join("cfg.toml"), text).unwrap();
}

#[test]
fn init_run_resume_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    assert_eq!(pitaevskii(d, &["init", "cfg.toml"]).status.code(), Some(3), "refuses to overwrite");

    let out = pitaevskii(d, &["run", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("out/diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("t,S,total_mass,E,X,Z,"));
    assert_eq!(lines.count(), 6);
    assert!(d.join("out/final.ckpt").exists() && d.join("out/particles.csv").exists());

    let out = pitaevskii(d, &["resume", "out/final.ckpt", "--config", "cfg.toml", "--t-end", "0.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("t = 0.05 -> 0.1"), "{stdout}");

    let out = pitaevskii(d, &["diagnose", "out/final.ckpt"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn configuration_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    let text = std::fs::read_to_string(d.join("cfg.toml")).unwrap();
    std::fs::write(d.join("bad.toml"), text.replace("m_f = 0.5", "m_f = 0.95")).unwrap();
    let out = pitaevskii(d, &["run", "bad.toml"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.m_f"), "{err}");

    std::fs::write(d.join("unknown.toml"), format!("{text}\n[extra]\nx = 1\n")).unwrap();
    assert_eq!(pitaevskii(d, &["run", "unknown.toml"]).status.code(), Some(3));
}

#[test]
fn usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(pitaevskii(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(pitaevskii(d, &["run", "missing.toml"]).status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_pitaevskii"))
        .args(["verify"])
        .env("PITAEVSKII_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupted_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    assert_eq!(pitaevskii(d, &["run", "cfg.toml"]).status.code(), Some(0));
    let path = d.join("out/final.ckpt");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let out = pitaevskii(d, &["diagnose", "out/final.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pitaevskii(dir.path(), &["verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 9);
}
