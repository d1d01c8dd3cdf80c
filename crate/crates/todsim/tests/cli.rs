use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ontology").join(name)
}

fn todsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_todsim"))
        .args(args)
        .env("TODSIM_OUT_DIR", out)
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = todsim(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mw = data("multiwoz.json");
    let mw = mw.to_str().unwrap();
    assert_eq!(todsim(&["ontology", "validate", mw], dir.path()).status.code(), Some(0));
    assert_eq!(todsim(&["ontology", "validate", "/nonexistent.json"], dir.path()).status.code(), Some(2));
    assert_eq!(todsim(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(
        todsim(&["simulate", "--ontology", mw, "--generator", "bart"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        todsim(&["simulate", "--ontology", mw, "--p-understand", "1.5"], dir.path()).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dialogues\": 3,\n \"colour\": 1}").unwrap();
    let o = todsim(&["simulate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let o = todsim(
        &["simulate", "--ontology", mw, "--dialogues", "2", "--generator", "external:exec:/nonexistent/gen"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_and_respects_the_turn_cap() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mw = data("multiwoz.json");
    let args = [
        "simulate", "--ontology", mw.to_str().unwrap(), "--dialogues", "30", "--seed", "11", "--generator", "stochastic",
        "--p-understand", "0.7", "--max-turns", "6",
    ];
    ok(&args, a.path());
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "3"]);
    ok(&threaded, b.path());
    let ta = std::fs::read(a.path().join("transcripts.jsonl")).unwrap();
    let tb = std::fs::read(b.path().join("transcripts.jsonl")).unwrap();
    assert_eq!(ta, tb);
    let lines = jsonl(&a.path().join("transcripts.jsonl"));
    assert!(lines[0].get("provenance").is_some());
    assert_eq!(lines.len(), 31);
    for t in &lines[1..] {
        assert!(t["total_turns"].as_u64().unwrap() <= 6);
        assert!(t["turns"].as_array().unwrap().len() <= 6);
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["provenance"]["seed"], 11);
}

#[test]
fn corpus_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mw = data("multiwoz.json");
    let mw = mw.to_str().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let c = corpus.to_str().unwrap();
    ok(&["gen-corpus", "--ontology", mw, "--dialogues", "10", "--out", c], dir.path());

    let sem = ok(&["eval-semantic", "--ontology", mw, "--golden", c], dir.path());
    let v: Value = serde_json::from_str(&sem).unwrap();
    assert_eq!(v["f1"], 1.0, "{sem}");
    assert_eq!(v["acc"], 1.0, "{sem}");

    ok(&["eval-nlg", "--ontology", mw, "--corpus", c], dir.path());
    assert!(dir.path().join("eval_nlg.json").exists());

    let full = dir.path().join("full.jsonl");
    let bare = dir.path().join("bare.jsonl");
    ok(&["make-pairs", "--ontology", mw, "--corpus", c, "--out", full.to_str().unwrap()], dir.path());
    ok(
        &["make-pairs", "--ontology", mw, "--corpus", c, "--features", "no_goal_no_history", "--out", bare.to_str().unwrap()],
        dir.path(),
    );
    let (full, bare) = (jsonl(&full), jsonl(&bare));
    assert_eq!(full.len(), bare.len());
    assert!(full.len() > 10);
    for (f, b) in full.iter().zip(&bare).skip(1) {
        let fi: Value = serde_json::from_str(f["input"].as_str().unwrap()).unwrap();
        let bi: Value = serde_json::from_str(b["input"].as_str().unwrap()).unwrap();
        assert_eq!(fi["system"], bi["system"]);
        assert_eq!(fi["turn"], bi["turn"]);
        assert_eq!(bi["goal"], Value::Array(vec![]));
        assert_eq!(bi["user"], Value::Array(vec![]));
        assert_eq!(f["output"], b["output"]);
    }
    assert_eq!(
        todsim(&["make-pairs", "--ontology", mw, "--corpus", c, "--features", "everything"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn external_generator_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mw = data("multiwoz.json");
    let spec = format!("external:exec:{} --noisy", env!("CARGO_BIN_EXE_todsim-echo"));
    ok(
        &["simulate", "--ontology", mw.to_str().unwrap(), "--dialogues", "3", "--max-turns", "5", "--generator", &spec],
        dir.path(),
    );
    let lines = jsonl(&dir.path().join("transcripts.jsonl"));
    let warned = lines[1..]
        .iter()
        .flat_map(|t| t["turns"].as_array().unwrap())
        .any(|turn| turn.get("warnings").is_some());
    assert!(warned, "illegal echo actions should be reported");
}

#[test]
fn silent_external_generator_times_out_with_fail_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let mw = data("multiwoz.json");
    let spec = format!("external:exec:{} --silent", env!("CARGO_BIN_EXE_todsim-echo"));
    ok(
        &[
            "simulate", "--ontology", mw.to_str().unwrap(), "--dialogues", "1", "--generator", &spec, "--timeout-ms", "200",
            "--fallback", "fail",
        ],
        dir.path(),
    );
    let lines = jsonl(&dir.path().join("transcripts.jsonl"));
    assert_eq!(lines[1]["outcome"], "failure");
    assert!(lines[1]["error"].as_str().unwrap().contains("200"));
}
