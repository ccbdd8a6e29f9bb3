use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &[&str] = &[
    "--set",
    "world.n_categories=2",
    "--set",
    "world.concepts_per_category=3",
    "--set",
    "world.instances_per_concept=4",
    "--set",
    "world.feature_dim=16",
    "--set",
    "train.embed_dim=8",
    "--set",
    "train.n_filters=4",
    "--set",
    "train.eval_games=50",
    "--set",
    "train.log_interval=20",
    "--iterations",
    "60",
    "--vocab",
    "10",
];

fn siglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siglab")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train_tiny(out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    let o = siglab(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let runs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs[0].clone()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn train_eval_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_tiny(dir.path(), &["--grounding"]);
    for f in ["manifest.json", "world.json", "metrics.jsonl", "checkpoint.json", "eval.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let ckpt = run.join("checkpoint.json");
    let o = siglab(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--games", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&run.join("eval.json"));
    assert!(report["comm_success"].is_number());
    assert_eq!(report["n_games"], 200);
    assert!(run.join("usage.csv").is_file());

    let o = siglab(&["analyze", "--report", run.join("eval.json").to_str().unwrap(), "--permutations", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let purity = read_json(&run.join("purity.json"));
    for key in ["purity", "chance_mean", "obs_minus_chance", "p_value"] {
        assert!(purity["purity"][key].is_number(), "{key}: {purity}");
    }
    assert!(purity["grounding"]["rate"].is_number());
    let spectrum = std::fs::read_to_string(run.join("spectrum.csv")).unwrap();
    let first: Vec<&str> = spectrum.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert!((first[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    let emb = std::fs::read_to_string(run.join("embeddings.csv")).unwrap();
    assert_eq!(emb.lines().count(), 1 + 6);
}

#[test]
fn train_is_deterministic_and_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = train_tiny(a.path(), &["--seed", "9"]);
    let rb = train_tiny(b.path(), &["--seed", "9"]);
    assert_eq!(ra.file_name(), rb.file_name());
    // manifests differ only in output.dir
    for f in ["metrics.jsonl", "checkpoint.json", "eval.json", "world.json"] {
        let same = std::fs::read(ra.join(f)).unwrap() == std::fs::read(rb.join(f)).unwrap();
        assert!(same, "{f} differs between identical runs");
    }
    let before = std::fs::read(ra.join("checkpoint.json")).unwrap();
    train_tiny(a.path(), &["--seed", "9"]);
    assert!(std::fs::read(ra.join("checkpoint.json")).unwrap() == before);
}

#[test]
fn replay_matches_logged_values() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_tiny(dir.path(), &[]);
    let o = siglab(&["replay", run.to_str().unwrap(), "--width", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let logged: Vec<Value> = std::fs::read_to_string(run.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), logged.len());
    for (row, rec) in rows.iter().zip(&logged) {
        let mut cols = row.split_whitespace();
        assert_eq!(cols.next().unwrap(), rec["iteration"].to_string());
        let shown: f64 = cols.next().unwrap().trim_end_matches('%').parse().unwrap();
        let success = rec["eval_success"].as_f64().unwrap();
        assert!((shown - success).abs() <= 0.005 + 1e-9, "{shown} vs {success}");
        let bar = row.split('|').nth(1).unwrap();
        assert_eq!(bar.len(), 20);
        assert_eq!(bar.matches('#').count(), (success / 5.0).round() as usize);
    }
}

#[test]
fn gen_world_writes_world() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-world", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(TINY);
    let o = siglab(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    let world = read_json(&path);
    assert_eq!(world["categories"].as_array().unwrap().len(), 2);
}

fn assert_fails(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("siglab: error[{kind}]: ")), "{err}");
}

#[test]
fn failures_are_single_line_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_fails(&siglab(&["fly"]), 2, "config");
    assert_fails(&siglab(&["train", "--out", out, "--set", "train.tua=3"]), 2, "config");
    assert_fails(&siglab(&["train", "--out", out, "--set", "nonsense"]), 2, "config");
    assert_fails(&siglab(&["train", "--out", out, "--set", "train.tau=-1"]), 2, "config");
    assert_fails(&siglab(&["train", "--manifest", "/nonexistent/m.json"]), 4, "io");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"sender\": [").unwrap();
    assert_fails(&siglab(&["eval", "--checkpoint", bad.to_str().unwrap()]), 4, "io");
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_fails(&siglab(&["train", "--manifest", empty.to_str().unwrap()]), 2, "config");
    let metrics = dir.path().join("m.jsonl");
    std::fs::write(&metrics, "").unwrap();
    assert_fails(&siglab(&["replay", metrics.to_str().unwrap()]), 3, "runtime");
}
