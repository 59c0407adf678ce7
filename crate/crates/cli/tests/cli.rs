use std::path::Path;
use std::process::{Command, Output};

use hawkes_graph::seeds::{self, Stream};
use hawkes_graph::{simulate, subcritical, InteractionGraph, KernelSpec, SubcriticalEstimate};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hawkes-graph"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn simulate_small(dir: &Path) -> String {
    let ev = path(dir, "ev.csv");
    let o = run(&[
        "simulate", "--n", "100", "--p", "0.5", "--mu", "1", "--kernel", "exp:1", "--horizon", "800", "--seed", "7",
        "--out", &ev,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    ev
}

#[test]
fn simulate_writes_csv_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_small(dir.path());
    let csv = std::fs::read_to_string(&ev).unwrap();
    assert!(csv.starts_with("individual,time\n"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["n"], 100);
    assert_eq!(meta["sim_seed"], seeds::derive(7, 0, Stream::Simulation));
    let run_meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev.run.json")).unwrap()).unwrap();
    assert_eq!(run_meta["seed"], 7);
    assert_eq!(run_meta["seed_source"], "flag");
    assert_eq!(run_meta["graph_seed"], seeds::derive(7, 0, Stream::Graph));
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let ev = path(dir.path(), "ev.csv");
    let o = run(&["simulate", "--n", "5", "--p", "0.5", "--kernel", "exp:1", "--horizon", "5", "--out", &ev]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run_meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev.run.json")).unwrap()).unwrap();
    assert_eq!(run_meta["seed_source"], "entropy");
    assert!(run_meta["seed"].is_u64());
}

#[test]
fn estimate_sub_contract() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_small(dir.path());
    let est = path(dir.path(), "est.json");
    let o = run(&[
        "estimate-sub", "--events", &ev, "--k", "50", "--t", "400", "--q", "7", "--alpha", "0.1", "--out", &est,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();
    let p = v["p_hat"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&p), "p̂ = {p}");
    assert!(v["ci"]["paper_literal"].is_number() || v["ci"]["paper_literal"].is_null());
    assert!(v["regime"]["rate_iii"].is_number());
    assert!(dir.path().join("est.run.json").exists());
}

/// The CSV path and the in-memory path give the same bits once the in-memory
/// log is rounded to the CSV resolution.
#[test]
fn csv_round_trip_matches_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_small(dir.path());
    let est = path(dir.path(), "est.json");
    let o = run(&["estimate-sub", "--events", &ev, "--k", "50", "--t", "400", "--out", &est]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let from_csv: SubcriticalEstimate = serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();

    let g = InteractionGraph::sample(100, 0.5, seeds::derive(7, 0, Stream::Graph)).unwrap();
    let kernel: KernelSpec = "exp:1".parse().unwrap();
    let mut log = simulate(&g, &kernel, 1.0, 800.0, seeds::derive(7, 0, Stream::Simulation)).unwrap();
    log.quantize();
    let in_memory = subcritical::estimate(&log, 50, 400.0, 7.0, 0.1).unwrap();
    assert_eq!(from_csv, in_memory);
    assert_eq!(from_csv.p_hat.to_bits(), in_memory.p_hat.to_bits());
}

#[test]
fn csv_format_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_small(dir.path());
    let est = path(dir.path(), "est.csv");
    let o = run(&["estimate-sub", "--events", &ev, "--k", "50", "--t", "400", "--format", "csv", "--out", &est]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&est).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let keys: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(keys.len(), lines[1].split(',').count());
    assert!(keys.contains(&"p_hat") && keys.contains(&"ci.delta_method") && keys.contains(&"regime.dominance"));
}

#[test]
fn estimate_super_fields() {
    let dir = tempfile::tempdir().unwrap();
    let ev = path(dir.path(), "ev.csv");
    let o = run(&[
        "simulate", "--n", "60", "--p", "0.6", "--kernel", "exp:0.3", "--horizon", "12", "--seed", "3", "--out", &ev,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let est = path(dir.path(), "sup.json");
    let o = run(&["estimate-super", "--events", &ev, "--k", "30", "--t", "12", "--alpha0", "0.3", "--out", &est]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();
    assert!(v["u"].is_number() && v["p"].is_number());
    assert_eq!(v["alpha0_used"], 0.3);
}

#[test]
fn graph_limits_reports_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "gl.json");
    let gfile = path(dir.path(), "g.txt");
    let o = run(&[
        "graph-limits", "--n", "40", "--p", "0.5", "--k", "20", "--kernel", "exp:1", "--graph-seed", "11",
        "--save-graph", &gfile, "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["limits"]["v_inf"].is_number());
    assert!(v["u_inf"].is_number());

    // Reloading the saved graph reproduces the report.
    let out2 = path(dir.path(), "gl2.json");
    let o = run(&["graph-limits", "--graph", &gfile, "--k", "20", "--kernel", "exp:1", "--out", &out2]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), std::fs::read_to_string(&out2).unwrap());
}

#[test]
fn domain_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_small(dir.path());
    let est = path(dir.path(), "est.json");
    let o = run(&["estimate-sub", "--events", &ev, "--k", "50", "--t", "3", "--out", &est]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E1:"), "{}", stderr(&o));

    let o = run(&["simulate", "--n", "5", "--p", "0.5", "--kernel", "gauss:1", "--horizon", "5", "--out", &est]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E1:"));
}

#[test]
fn io_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["estimate-sub", "--events", &path(dir.path(), "absent.csv"), "--n", "5", "--horizon", "10",
        "--k", "5", "--t", "4", "--out", &path(dir.path(), "e.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("E2:"), "{}", stderr(&o));
}

fn write_config(dir: &Path, body: &str) -> String {
    let cfg = path(dir, "cfg.json");
    std::fs::write(&cfg, body).unwrap();
    cfg
}

#[test]
fn validate_failing_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"target": "graph_v_inf_clt", "params": {"n": 40, "k": 20, "kernel": "exp:1", "p": 0.5},
            "replicas": 20, "seed": 1, "tolerances": {"variance_band": 1e-9}}"#,
    );
    let out = path(dir.path(), "report.json");
    let o = run(&["--threads", "1", "validate", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("E3:"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
    assert!(dir.path().join("report.v_inf.qq.csv").exists());
}

#[test]
fn validate_needs_a_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"target": "graph_u_inf", "params": {"n": 40, "k": 20, "kernel": "exp:1", "p": 0.5}, "replicas": 10}"#,
    );
    let out = path(dir.path(), "r.json");
    let o = run(&["validate", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));

    let strip = |p: &str| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_clock_secs");
        v
    };
    let out2 = path(dir.path(), "r2.json");
    for o in [&out, &out2] {
        let r = run(&["validate", "--config", &cfg, "--seed", "99", "--out", o]);
        assert!(matches!(r.status.code(), Some(0) | Some(3)), "{}", stderr(&r));
    }
    assert_eq!(strip(&out), strip(&out2));
    assert_eq!(strip(&out)["config"]["seed"], 99);
}

#[test]
fn usage_error_exits_1() {
    let o = run(&["simulate", "--n", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E1:"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
