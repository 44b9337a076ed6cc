use std::path::Path;
use std::process::{Command, Output};

use chrono::{TimeZone, Utc};
use p2pscope::snapstore::{write_snapshot, EdgeSetSnapshot};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_p2pscope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn p2pscope")
}

fn json_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn snap(dir: &Path, chain: &str, edges: &[(&str, &str)]) -> String {
    let mut s = EdgeSetSnapshot::new(chain, Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap());
    for (a, b) in edges {
        s.records.entry(a.to_string()).or_default().insert(b.to_string());
        s.records.entry(b.to_string()).or_default();
    }
    write_snapshot(dir, &s).unwrap().display().to_string()
}

#[test]
fn complete_triangle_has_unit_density() {
    let d = TempDir::new().unwrap();
    let p = snap(d.path(), "tri", &[("a", "b"), ("b", "a"), ("b", "c"), ("c", "b"), ("a", "c"), ("c", "a")]);
    let v = json_ok(&["analyze", "--snapshot", &p, "--metric", "density"]);
    assert_eq!(v["density"], 1.0);
}

#[test]
fn star_hub_removal_halves_the_component() {
    let d = TempDir::new().unwrap();
    let leaves: Vec<String> = (0..20).map(|i| format!("leaf{i:02}")).collect();
    let edges: Vec<(&str, &str)> = leaves.iter().map(|l| ("hub", l.as_str())).collect();
    let p = snap(d.path(), "star", &edges);
    let out = d.path().join("out");
    let v = json_ok(&["--out-dir", out.to_str().unwrap(), "attack", "--snapshot", &p, "--strategy", "out_degree"]);
    assert_eq!(v["nodes_to_50"], 1);
    let tsv = std::fs::read_to_string(out.join("star-20210301T000000Z.out_degree.tsv")).unwrap();
    assert!(tsv.starts_with("frac\tlcc\tn_comp\tdiam\n"));
}

#[test]
fn simnet_is_deterministic_and_publishes_no_addresses() {
    let outs: Vec<(Vec<u8>, TempDir)> = (0..2)
        .map(|_| {
            let d = TempDir::new().unwrap();
            let o = run(&[
                "--seed",
                "9",
                "--out-dir",
                d.path().to_str().unwrap(),
                "simnet",
                "--topology",
                "rr:n=50,k=6,adv=0.7",
                "--ticks",
                "2",
            ]);
            assert!(o.status.success());
            (o.stdout, d)
        })
        .collect();
    assert_eq!(outs[0].0, outs[1].0);
    let v: Value = serde_json::from_slice(&outs[0].0).unwrap();
    assert_eq!(v["recall"].as_array().unwrap().len(), 2);
    for name in ["simnet-20200101T000000Z.snap", "simnet-20200101T020000Z.snap"] {
        let a = std::fs::read(outs[0].1.path().join("snapshots").join(name)).unwrap();
        let b = std::fs::read(outs[1].1.path().join("snapshots").join(name)).unwrap();
        assert_eq!(a, b);
    }
    assert!(run(&["audit", "--dir", outs[0].1.path().to_str().unwrap()]).status.success());
}

#[test]
fn audit_flags_raw_addresses() {
    let d = TempDir::new().unwrap();
    snap(d.path(), "leaky", &[("10.1.2.3:8333", "10.4.5.6:8333")]);
    let o = run(&["audit", "--dir", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "audit");
}

#[test]
fn errors_are_json_on_stderr() {
    let o = run(&["analyze", "--snapshot", "/nonexistent/x.snap"]);
    assert!(!o.status.success());
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(e["error"].is_string() && e["message"].is_string());
}

#[test]
fn fit_single_family_from_file() {
    let d = TempDir::new().unwrap();
    let p = d.path().join("x.txt");
    let xs: Vec<String> = (1..=400).map(|i| ((1000.0 / i as f64).floor() as u64).to_string()).collect();
    std::fs::write(&p, xs.join("\n")).unwrap();
    let v = json_ok(&["fit", "--input", p.to_str().unwrap(), "--family", "PL"]);
    assert_eq!(v["family"], "PL");
    let alpha = v["params"]["alpha"].as_f64().unwrap();
    assert!(alpha > 1.5 && alpha < 2.5, "{v}");
}
