//! The `qkd-distill` binary end to end: exit codes, key stores, encryption and reports.

use std::path::Path;
use std::process::{Command, Output};

use qkd_core::config;

fn qkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkd-distill"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, flip: f64) -> String {
    let mut cfg = config::preset("bb84_low_qber").unwrap();
    cfg.input_bits = Some(40_000);
    cfg.channel.flip_probability = flip;
    cfg.output.keystore = Some(dir.join("alice.store"));
    cfg.output.bob_keystore = Some(dir.join("bob.store"));
    cfg.output.key_file = Some(dir.join("alice.key"));
    let path = dir.join("cfg.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qkd(&["run", "--preset", "no_such_preset"])), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"pa": {"epsilon": 1e-9}}"#).unwrap();
    let o = qkd(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pa.epsilon"));
}

#[test]
fn abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.35);
    let o = qkd(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("alice.key").exists());
}

#[test]
fn run_encrypt_decrypt_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let cfg = write_config(dir.path(), 0.03);
    let o = qkd(&[
        "run",
        "--config",
        &cfg,
        "--instances",
        "2",
        "--metrics-out",
        &d("m.jsonl"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Key rate (Kbps)"));

    let plain = b"attack at dawn, bring snacks".repeat(40);
    std::fs::write(d("plain.txt"), &plain).unwrap();
    let o = qkd(&[
        "encrypt",
        "--keystore",
        &d("alice.store"),
        "--input",
        &d("plain.txt"),
        "--output",
        &d("sealed"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_ne!(std::fs::read(d("sealed")).unwrap(), plain);
    let o = qkd(&[
        "decrypt",
        "--keystore",
        &d("bob.store"),
        "--input",
        &d("sealed"),
        "--output",
        &d("opened"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(d("opened")).unwrap(), plain);

    let o = qkd(&["report", &d("m.jsonl"), "--csv", &d("report.csv")]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(d("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("scenario,protocol,input_bits"));
}

#[test]
fn empty_store_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::write(&input, b"x").unwrap();
    let o = qkd(&[
        "encrypt",
        "--keystore",
        dir.path().join("empty.store").to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn simulate_then_run_saved_session() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("s.bin");
    let s = session.to_str().unwrap();
    let o = qkd(&[
        "simulate",
        "--preset",
        "cow_high_qber",
        "--input-bits",
        "60000",
        "--emit-session",
        s,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = qkd(&[
        "run",
        "--preset",
        "cow_high_qber",
        "--input-bits",
        "60000",
        "--session",
        s,
        "--json",
    ]);
    let out = String::from_utf8_lossy(&o.stdout);
    // At this size the estimate's confidence term can push COW past the threshold.
    assert!(code(&o) == 0 || code(&o) == 3, "{}", String::from_utf8_lossy(&o.stderr));
    if code(&o) == 0 {
        let m: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(m["protocol"], "cow");
    }
}
