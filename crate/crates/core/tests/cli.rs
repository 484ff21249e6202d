//! The `pfab` binary end to end.

use std::path::PathBuf;
use std::process::{Command, Output};

fn pfab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfab")).args(args).output().expect("spawn pfab")
}

fn stdout(args: &[&str]) -> String {
    let out = pfab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("pfab-cli-{}-{name}", std::process::id()));
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn integral_of_the_unit_level() {
    let v: f64 = stdout(&["integral", "--system", "s1", "--i", "0", "--j", "0", "--h", "1"]).trim().parse().unwrap();
    assert!((v - 4.0 * 2f64.sqrt()).abs() < 1e-13);
}

#[test]
fn third_wronskian_of_s2() {
    let out = stdout(&["wronskian", "--system", "s2", "--k", "3", "--h", "0.5"]);
    let row = out.lines().nth(1).unwrap();
    let w: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((w - 0.25).abs() < 1e-12, "{out}");
}

#[test]
fn zero_perturbation_is_reported_identically_zero() {
    let cfg = scratch("zero.json", r#"{"n": 2}"#);
    let out = stdout(&["melnikov", "zeros", "--system", "s1", "--config", cfg.to_str().unwrap()]);
    assert!(out.contains("identically zero"), "{out}");
}

#[test]
fn outputs_are_deterministic() {
    let audit = ["audit", "--system", "s2", "--n", "1,2", "--trials", "5", "--seed", "7", "--grid", "256"];
    assert_eq!(stdout(&audit), stdout(&audit));
    let realize = ["realize", "--system", "s2", "--targets", "0.1,0.25,0.4,0.55,0.7,0.85", "--report"];
    assert_eq!(stdout(&realize), stdout(&realize));
    let eval = ["melnikov", "eval", "--system", "s1", "--config"];
    let cfg = scratch("eval.json", r#"{"n": 1, "a+": {"1,0": 1.0}, "b-": {"0,0": -0.5}}"#);
    let mut args = eval.to_vec();
    args.extend(["--h-min", "0.1", "--h-max", "5", "--count", "9", "--spacing", "log"]);
    args.insert(5, cfg.to_str().unwrap());
    let first = stdout(&args);
    assert_eq!(first, stdout(&args));
    assert_eq!(first.lines().count(), 10);
    assert!(first.starts_with("h,"));
}

#[test]
fn simulate_emits_samples_and_summary() {
    let cfg = scratch("sim.json", r#"{"n": 1, "a+": {"1,0": 1.0}, "b+": {"0,1": -0.3}}"#);
    let summary = std::env::temp_dir().join(format!("pfab-cli-{}-summary.json", std::process::id()));
    let out = stdout(&[
        "simulate", "--system", "s2", "--eps", "1e-4", "--config", cfg.to_str().unwrap(), "--h-min", "0.2", "--h-max", "0.8",
        "--samples", "8", "--summary", summary.to_str().unwrap(),
    ]);
    assert_eq!(out.lines().next().unwrap(), "x0,x_ret,displacement,h0");
    assert_eq!(out.lines().count(), 9);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(json.is_object());
}

#[test]
fn exit_codes() {
    assert_eq!(pfab(&["--help"]).status.code(), Some(0));
    assert_eq!(pfab(&["integral", "--help"]).status.code(), Some(0));
    assert_eq!(pfab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pfab(&["integral", "--system", "s9", "--i", "0", "--j", "0", "--h", "1"]).status.code(), Some(1));
    // outside every period annulus of S2
    assert_eq!(pfab(&["integral", "--system", "s2", "--i", "0", "--j", "0", "--h", "1.5"]).status.code(), Some(1));
    let bad = scratch("bad.json", r#"{"n": 1, "a+": {"3,0": 1.0}}"#);
    assert_eq!(pfab(&["melnikov", "zeros", "--system", "s1", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}
