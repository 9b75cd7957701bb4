//! The `evotree` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn evotree(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evotree"))
        .current_dir(dir)
        .args(args)
        .env_remove("EVOTREE_CONFIG")
        .env_remove("EVOTREE_STATE_DIR")
        .env_remove("EVOTREE_BACKEND")
        .env_remove("EVOTREE_EMBEDDER")
        .env_remove("EVOTREE_SCRIPT")
        .env_remove("EVOTREE_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn tree_compute_prints_four_sequences_summing_to_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = evotree(dir.path(), &["tree", "compute", data("large_loca.json").to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let seqs = v["sequences"].as_array().unwrap();
    let outcomes: Vec<&str> = seqs.iter().map(|s| s["outcomes"].as_str().unwrap()).collect();
    assert_eq!(outcomes, ["SS", "SF", "FS", "FF"]);
    let want = [0.9 * 0.8, 0.9 * 0.2, 0.1 * 0.8, 0.1 * 0.2];
    let mut total = 0.0;
    for (s, w) in seqs.iter().zip(want) {
        let f = s["frequency"].as_f64().unwrap();
        assert!((f - 0.002 * w).abs() < 1e-15, "{f}");
        total += f;
    }
    assert!((total - 0.002).abs() <= 1e-12 * 0.002);

    let text = evotree(dir.path(), &["tree", "compute", data("large_loca.json").to_str().unwrap()]);
    assert!(stdout(&text).contains("sum of sequence frequencies: 2.000000e-3"));
}

#[test]
fn tree_mitigate_forces_success() {
    let dir = tempfile::tempdir().unwrap();
    let file = data("large_loca.json");
    let o = evotree(dir.path(), &["tree", "mitigate", file.to_str().unwrap(), "--force", "1", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let melt = v["consequences"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["label"] == "Core meltdown")
        .unwrap()["frequency"]
        .as_f64()
        .unwrap();
    assert!((melt - 0.002 * 0.2).abs() < 1e-15);
    let bad = evotree(dir.path(), &["tree", "mitigate", file.to_str().unwrap(), "--headers", "9"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn invalid_tree_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"initiating_event":{"name":"X","frequency":1.0},"headers":[{"id":1,"name":"A","success_prob":1.5}]}"#,
    )
    .unwrap();
    let o = evotree(dir.path(), &["tree", "compute", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn dataset_validate_reports_splits() {
    let dir = tempfile::tempdir().unwrap();
    let o = evotree(dir.path(), &["dataset", "validate", data("corpus.jsonl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("38 cases"));
    assert!(text.contains("10/3"));
    assert!(text.contains("31/7"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"x\":1}\n").unwrap();
    let o = evotree(dir.path(), &["dataset", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_corpus_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let o = evotree(dir.path(), &["dataset", "synth", "--out", "c.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let fresh = std::fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    let shipped = std::fs::read_to_string(data("corpus.jsonl")).unwrap();
    assert_eq!(fresh, shipped);
}

#[test]
fn train_memory_and_infer_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(evotree(d, &["dataset", "synth", "--out", "c.jsonl"]).status.code(), Some(0));
    let o = evotree(d, &["dataset", "script", "c.jsonl", "--out", "s.jsonl", "--rejections", "0,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let scripted = ["--backend", "scripted", "--script", "s.jsonl", "--state-dir", "st"];
    let mut args = scripted.to_vec();
    args.extend(["--run-dir", "r1", "train", "--dataset", "c.jsonl"]);
    let o = evotree(d, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("task1: 10 samples, 10 accepted"));
    for f in ["transcript.jsonl", "accumulation.csv", "results.jsonl"] {
        assert!(d.join("r1").join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(d.join("r1/accumulation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 + 31 + 31);

    let o = evotree(d, &["--state-dir", "st", "memory", "stats"]);
    assert_eq!(o.status.code(), Some(0));
    let stats = stdout(&o);
    assert!(stats.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["task1", "10", "5"]), "{stats}");

    let o = evotree(d, &["--state-dir", "st", "memory", "dump", "--task", "2", "--kind", "experience"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dumped = stdout(&o);
    assert_eq!(dumped.lines().count(), 15);
    assert!(dumped.lines().all(|l| l.contains("\"outcome\":\"failure\"")));

    let corpus = std::fs::read_to_string(d.join("c.jsonl")).unwrap();
    let line = corpus
        .lines()
        .find(|l| l.contains("\"task1_split\":\"test\""))
        .unwrap();
    std::fs::write(d.join("one.jsonl"), format!("{line}\n")).unwrap();
    let mut args = scripted.to_vec();
    args.extend(["--run-dir", "r2", "infer", "--case", "one.jsonl", "--json"]);
    let o = evotree(d, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["subevents", "header_events", "operator_actions"] {
        assert_eq!(v[key]["status"], "answered", "{key}");
    }
    assert!(d.join("r2/inference.jsonl").is_file());

    let after = evotree(d, &["--state-dir", "st", "memory", "stats"]);
    assert_eq!(stdout(&after), stats, "inference must not write the stores");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(evotree(d, &[]).status.code(), Some(2));
    assert_eq!(evotree(d, &["bogus"]).status.code(), Some(2));
    let help = evotree(d, &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("Usage"));
    assert_eq!(evotree(d, &["--backend", "scripted", "eval"]).status.code(), Some(2));
    assert_eq!(evotree(d, &["--backend", "remote", "eval"]).status.code(), Some(2));
    assert_eq!(
        evotree(d, &["tree", "compute", "missing.json"]).status.code(),
        Some(1)
    );
}
