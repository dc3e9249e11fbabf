use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uniton-lab")).args(args).output().expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn clifford_potential_is_certified_not_finite() {
    let r = report(&["analyze-potential", "--zoo", "clifford3"]);
    assert_eq!(r["schema"], "uniton-lab/1");
    assert_eq!(r["verdict"]["verdict"], "NotFiniteCertified");
    assert_eq!(r["input_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn veronese_loop_factorizes_into_two_unitons() {
    let r = report(&["analyze-loop", "--zoo", "veronese3", "--factorize"]);
    assert_eq!(r["verdict"]["verdict"], "Finite");
    assert_eq!(r["verdict"]["k0"], 0);
    assert_eq!(r["results"]["factorization"]["unitons"], 2);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn missing_input_file_exits_2() {
    let out = run(&["diagram", "--file", "/nonexistent/diagram.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "tol = 1e-6\nno_such_key = 3\n").unwrap();
    let out = run(&["--config", path(&cfg), "zoo", "list"]);
    assert_eq!(out.status.code(), Some(3));
    let cfg = dir.path().join("neg.toml");
    std::fs::write(&cfg, "tol = -1.0\n").unwrap();
    assert_eq!(run(&["--config", path(&cfg), "zoo", "list"]).status.code(), Some(3));
}

#[test]
fn plot_outside_analysis_commands_exits_3() {
    let out = run(&["--plot", "/tmp/x.svg", "diagram", "--zoo", "g2c4-s1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<Vec<u8>> = ["1", "2", "2"]
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let p = dir.path().join(format!("r{k}.json"));
            let o = run(&["--threads", t, "--out", path(&p), "analyze-potential", "--zoo", "superconf-cp3"]);
            assert!(o.status.success());
            std::fs::read(&p).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[1], outs[2]);
}

#[test]
fn emitted_diagram_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("d.json");
    let out = run(&["--out", path(&f), "zoo", "emit", "g2c4-s1", "--kind", "diagram"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let from_file = report(&["diagram", "--file", path(&f)]);
    let from_zoo = report(&["diagram", "--zoo", "g2c4-s1"]);
    assert_eq!(from_file["verdict"], from_zoo["verdict"]);
    assert_eq!(from_file["results"]["arrows"], from_zoo["results"]["arrows"]);
}

#[test]
fn emitted_constant_potential_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.json");
    assert!(run(&["--out", path(&f), "zoo", "emit", "clifford3", "--kind", "potential"]).status.success());
    let r = report(&["analyze-potential", "--file", path(&f)]);
    assert_eq!(r["verdict"]["verdict"], "NotFiniteCertified");
}

#[test]
fn trace_and_plot_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace");
    let svg = dir.path().join("growth.svg");
    let out = run(&["--trace", path(&trace), "--plot", path(&svg), "analyze-loop", "--zoo", "veronese3", "--factorize"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(trace.join("window_profile.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(trace.join("factorization.csv").exists());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn harmonic_sequence_of_veronese_vertex() {
    let r = report(&["harmonic-seq", "--vertex", "veronese3.h0", "--range", "0,3"]);
    assert_eq!(r["results"]["isotropy"], "Infinite");
    assert_eq!(r["results"]["sequence_ranks"]["3"], 0);
}

#[test]
fn dbar_frame_bounds_hold_for_clifford() {
    let r = report(&["dbar", "--zoo", "clifford3"]);
    let checks = r["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    assert!(checks.iter().all(|c| c["pass"] == true));
}
