use std::path::Path;
use std::process::{Command, Output};

use hmn_core::genbench::io::write_network;
use hmn_core::genbench::{generate, GeneratorParams};
use hmn_core::model::{Evidence, Value};

fn hmn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmn")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_exact() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    let out = hmn(&[
        "generate", "--n1", "6", "--n2", "2", "-k", "2", "--c1", "2", "--c2", "6", "-t", "1", "--seed", "4", "-o",
        path_str(&net),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = hmn(&["exact", path_str(&net)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["log_evidence"].is_number());

    for mode in ["ijgp-rb", "pure-rb"] {
        let out = hmn(&["sample", path_str(&net), "--mode", mode, "--w", "1", "--samples", "200", "--seed", "1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = hmn(&["ijgp", path_str(&net), "--i-bound", "1"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    std::fs::write(&net, r#"{"variables": [], "cpds": [], "constraints": [], "evidence": {"X": 1}}"#).unwrap();
    let out = hmn(&["exact", path_str(&net)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = hmn(&["generate", "--n1", "3", "-k", "2", "--c1", "1", "-t", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_with_one() {
    let out = hmn(&["exact", "/nonexistent/net.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn impossible_evidence_exits_with_three() {
    let net = generate(&GeneratorParams::new(4, 0, 2, 1, 0, 0, 1, 9)).unwrap();
    let c = &net.constraints()[0];
    let forbidden = (0..2)
        .flat_map(|a| (0..2).map(move |b| vec![a, b]))
        .find(|t| !c.allows(t))
        .unwrap();
    let mut ev = Evidence::new();
    for (v, x) in c.scope.iter().zip(&forbidden) {
        ev.insert(*v, Value::Discrete(*x));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    write_network(&path, &net, &ev).unwrap();
    let out = hmn(&["exact", path_str(&path)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
