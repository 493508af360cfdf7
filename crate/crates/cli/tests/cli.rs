use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geomrl_core::geometry::{write_dataset, Conformation};
use geomrl_core::training::{morse_dataset, Morse};
use serde_json::{json, Value};
use tempfile::TempDir;

fn geomrl(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geomrl"));
    cmd.args(args).env_remove("GEOM_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Tiny energy+force run over 8 Morse clusters.
fn tiny_run(dir: &Path, family: &str, out: &str) -> PathBuf {
    let data = dir.join("data.jsonl");
    if !data.exists() {
        write_dataset(&data, &morse_dataset(8, 4, Morse::default(), 1).unwrap()).unwrap();
    }
    let cfg = json!({
        "dataset": "data.jsonl",
        "model": {"family": family, "hidden": 8, "layers": 1, "cutoff": 3.0},
        "task": "energy+force",
        "split": {"seed": 0, "fractions": [0.75, 0.25, 0.0]},
        "optimizer": {"steps": 10, "lr_max": 0.005},
        "normalize": true,
        "seed": 3,
        "output_dir": out,
    });
    let path = dir.join(format!("{out}.json"));
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn metrics(dir: &Path, out: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(out).join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn tiny_training_run_writes_metrics_and_checkpoint() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_run(dir.path(), "schnet", "run");
    let out = run(&mut geomrl(&["train", path_str(&cfg)]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let m = metrics(dir.path(), "run");
    assert_eq!(m["train_loss"].as_array().unwrap().len(), 10);
    assert_eq!(m["step"], json!((0..10).collect::<Vec<_>>()));
    assert!(m["val_mae_energy"].as_f64().unwrap().is_finite());
    assert!(m["val_mae_force"].as_f64().is_some());
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("run/checkpoint.json").is_file());
    assert!(dir.path().join("run/normalization.json").is_file());

    let ev = run(&mut geomrl(&["eval", path_str(&cfg), "--split", "val"]));
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let e: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/eval.json")).unwrap()).unwrap();
    assert_eq!(e["count"], 2);
    assert_eq!(e["mae_energy"], m["val_mae_energy"]);
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    let cfg_text = json!({
        "dataset": "nowhere.jsonl",
        "model": {"family": "schnet", "hidden": 8, "layers": 1, "cutoff": 3.0},
        "task": "energy",
        "optimizer": {"steps": 1, "lr_max": 0.001},
    });
    std::fs::write(&cfg, cfg_text.to_string()).unwrap();
    let out = run(&mut geomrl(&["train", path_str(&cfg)]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.jsonl"));
}

#[test]
fn bad_split_fractions_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_run(dir.path(), "schnet", "run");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["split"]["fractions"] = json!([0.5, 0.2, 0.2]);
    std::fs::write(&cfg, v.to_string()).unwrap();
    assert_eq!(run(&mut geomrl(&["train", path_str(&cfg)])).status.code(), Some(2));
}

fn without_clock(mut m: Value) -> Value {
    m.as_object_mut().unwrap().remove("wall_seconds");
    m
}

#[test]
fn repeated_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let cfg = tiny_run(dir.path(), "egnn", out);
        assert!(run(&mut geomrl(&["train", path_str(&cfg)])).status.success());
    }
    let (a, b) = (metrics(dir.path(), "a"), metrics(dir.path(), "b"));
    assert_ne!(a["config_hash"], b["config_hash"]);
    let strip = |mut m: Value| {
        m.as_object_mut().unwrap().remove("config_hash");
        without_clock(m)
    };
    assert_eq!(strip(a), strip(b));
    let read = |d: &str| std::fs::read(dir.path().join(d).join("checkpoint.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn seed_variable_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_run(dir.path(), "schnet", "run");
    let train = |seed: &str| {
        let out = run(geomrl(&["train", path_str(&cfg)]).env("GEOM_SEED", seed));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (without_clock(metrics(dir.path(), "run")), std::fs::read(dir.path().join("run/checkpoint.json")).unwrap())
    };
    let (m3, c3) = train("3");
    let (m4, c4) = train("4");
    assert_ne!(c3, c4);
    assert_ne!(m3["config_hash"], m4["config_hash"]);
    let out = run(&mut geomrl(&["train", path_str(&cfg)]));
    assert!(out.status.success());
    assert_eq!(without_clock(metrics(dir.path(), "run")), m3);
    assert_eq!(run(geomrl(&["train", path_str(&cfg)]).env("GEOM_SEED", "x")).status.code(), Some(2));
}

#[test]
fn pretrain_requires_a_pretraining_task() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_run(dir.path(), "schnet", "run");
    assert_eq!(run(&mut geomrl(&["pretrain", path_str(&cfg)])).status.code(), Some(2));

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["task"] = json!("pretrain:distance");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = run(&mut geomrl(&["pretrain", path_str(&cfg)]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(metrics(dir.path(), "run")["train_loss"].as_array().unwrap().len(), 10);
}

fn edge_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn build_graph_writes_one_line_per_conformation() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    let pair = Conformation::new("pair", vec![1, 1], vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
    let lone = Conformation::new("lone", vec![8], vec![[0.0; 3]]).unwrap();
    write_dataset(&input, &[pair, lone]).unwrap();
    let output = dir.path().join("edges.jsonl");
    let out = run(&mut geomrl(&[
        "build-graph",
        "--input",
        path_str(&input),
        "--cutoff",
        "1.5",
        "--output",
        path_str(&output),
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = edge_lines(&output);
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], "pair");
    assert_eq!(lines[0]["src"].as_array().unwrap().len(), 2);
    assert_eq!(lines[0]["dist"], json!([1.0, 1.0]));
    assert_eq!(lines[1]["src"], json!([]));
}

#[test]
fn build_graph_reports_the_bad_line() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    let good = r#"{"id":"a","z":[1],"pos":[[0,0,0]]}"#;
    std::fs::write(&input, format!("{good}\n{{\"id\": \"b\", \"z\": [1]\n")).unwrap();
    let out = run(&mut geomrl(&[
        "build-graph",
        "--input",
        path_str(&input),
        "--cutoff",
        "1.5",
        "--output",
        path_str(&dir.path().join("e.jsonl")),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn build_graph_cubic_cell_keeps_anchor_edges_only() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("cubic.jsonl");
    let l = 1.0;
    let corners: Vec<[f64; 3]> = (0..8)
        .map(|k| [(k & 1) as f64 * l, ((k >> 1) & 1) as f64 * l, ((k >> 2) & 1) as f64 * l])
        .collect();
    let cell = Conformation::new("cubic", vec![11; 8], corners)
        .unwrap()
        .with_lattice([[2.0 * l, 0.0, 0.0], [0.0, 2.0 * l, 0.0], [0.0, 0.0, 2.0 * l]])
        .unwrap();
    write_dataset(&input, &[cell]).unwrap();
    let output = dir.path().join("edges.jsonl");
    let status = run(&mut geomrl(&[
        "build-graph",
        "--input",
        path_str(&input),
        "--cutoff",
        "1.0",
        "--periodic",
        "gathered",
        "--output",
        path_str(&output),
    ]))
    .status;
    assert!(status.success());
    let line = &edge_lines(&output)[0];
    let pairs: Vec<(u64, u64)> = line["src"]
        .as_array()
        .unwrap()
        .iter()
        .zip(line["dst"].as_array().unwrap())
        .map(|(s, d)| (s.as_u64().unwrap(), d.as_u64().unwrap()))
        .collect();
    assert!(pairs.contains(&(0, 1)));
    assert!(pairs.iter().all(|&(s, d)| s < 8 && d < 8));
    assert_eq!(pairs.len(), 48);
    assert!(line["dist"].as_array().unwrap().iter().all(|d| (d.as_f64().unwrap() - l).abs() < 1e-12));
    assert!(line.get("image_of").is_none());
}

#[test]
fn check_equiv_passes_and_fails_by_tolerance() {
    let dir = TempDir::new().unwrap();
    let egnn = dir.path().join("egnn.json");
    std::fs::write(&egnn, r#"{"family":"egnn","hidden":8,"layers":2,"cutoff":3.0}"#).unwrap();
    let out = run(&mut geomrl(&["check-equiv", path_str(&egnn), "--trials", "50", "--tolerance", "1e-7"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = run(&mut geomrl(&["check-equiv", path_str(&egnn), "--trials", "5", "--tolerance", "0"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("property violation"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("VIOLATION"));
}

#[test]
fn invariant_family_has_exactly_zero_translation_deviation() {
    let dir = TempDir::new().unwrap();
    let schnet = dir.path().join("schnet.json");
    std::fs::write(&schnet, r#"{"family":"schnet","hidden":8,"layers":2,"cutoff":3.0}"#).unwrap();
    let out = run(&mut geomrl(&["check-equiv", path_str(&schnet), "--trials", "20"]));
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find(|l| l.contains("dyadic translation"))
        .expect("translation claim");
    assert!(line.contains("max deviation 0.000e0"), "{line}");
}

#[test]
fn check_equiv_rejects_unknown_families() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"family":"mace","cutoff":3.0}"#).unwrap();
    assert_eq!(run(&mut geomrl(&["check-equiv", path_str(&bad)])).status.code(), Some(2));
}
