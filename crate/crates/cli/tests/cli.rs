use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forumtag")).args(args).current_dir(dir).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) {
    let o = run(dir, &["synth-gen", "--out-dir", "syn", "--seed", "2", "--train-sentences", "60", "--test-sentences", "20", "--vector-dim", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(dir, &["dataset-build", "form-m", "--threads", "syn/train.threads.jsonl", "--g1", "syn/train.g1.tsv", "--g2", "syn/train.g2.tsv", "--out", "train.conll"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validation_errors_exit_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["train", "--corpus", "missing.conll"][..],
        &["train", "--corpus", "x", "--no-such-flag"],
        &["dataset-build", "form-x", "--threads", "a", "--g1", "b", "--g2", "c", "--out", "d"],
        &["agreement"],
        &["gradcheck", "--variant", "lstm"],
    ] {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_precedence_is_flags_then_file_then_defaults() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"variant": "blstm-crf", "max_epochs": 1, "hidden": 6, "word_dim": 8, "batch_size": 4, "seed": 9}"#,
    )
    .unwrap();
    let o = run(
        dir.path(),
        &["train", "--config", "cfg.json", "--corpus", "train.conll", "--hidden", "7", "--save-config", "resolved.json", "--json"],
    );
    let out = stdout_json(&o);
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("resolved.json")).unwrap()).unwrap();
    assert_eq!(cfg["hidden"], 7);
    assert_eq!(cfg["word_dim"], 8);
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["variant"], "blstm-crf");
    assert_eq!(cfg["context_cap"], 5);
    assert_eq!(out["epochs"], 1);

    std::fs::write(dir.path().join("bad.json"), r#"{"g1": "a.tsv", "colour": 3}"#).unwrap();
    let o = run(dir.path(), &["agreement", "--config", "bad.json", "--g2", "b.tsv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn agreement_accepts_counts_and_files() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::write(dir.path().join("counts.json"), r#"{"Videos": [1852, 3037, 1236]}"#).unwrap();
    let v = stdout_json(&run(dir.path(), &["agreement", "--counts", "counts.json", "--json"]));
    assert_eq!(v["per_type"]["Videos"]["union"], 3653);
    assert!((v["per_type"]["Videos"]["p_pos"].as_f64().unwrap() - 0.506).abs() < 1e-3);
    let v = stdout_json(&run(dir.path(), &["agreement", "--g1", "syn/train.g1.tsv", "--g2", "syn/train.g2.tsv", "--json"]));
    let p = v["total"]["p_pos"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn gradcheck_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    for variant in ["blstm-crf-ce-ca", "blstm", "crf"] {
        let v = stdout_json(&run(dir.path(), &["gradcheck", "--variant", variant, "--sample", "40", "--json"]));
        assert_eq!(v["passed"], true, "{v}");
        assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);
    }
}

#[test]
fn tag_and_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = run(dir.path(), &["train", "--variant", "crf", "--corpus", "train.conll", "--out", "m.ckpt", "--max-epochs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tagged = stdout_json(&run(dir.path(), &["tag", "--model", "m.ckpt", "--input", "syn/test.threads.jsonl", "--out", "pred.conll", "--json"]));
    assert_eq!(tagged["sentences"], 20);
    let o = run(dir.path(), &["dataset-build", "form-m", "--threads", "syn/test.threads.jsonl", "--g1", "syn/test.g1.tsv", "--g2", "syn/test.g2.tsv", "--out", "test.conll"]);
    assert!(o.status.success());
    let v = stdout_json(&run(dir.path(), &["analyze-errors", "--gold", "test.conll", "--pred", "pred.conll", "--vectors", "syn/vectors.txt", "--json"]));
    assert!(v["errors"]["total"].is_object());
    assert!(v["oov"]["oov"]["total"].as_u64().unwrap() > 0);
    let o = run(dir.path(), &["analyze-errors", "--gold", "test.conll", "--pred", "train.conll"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corpus_build_splits_raw_posts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("raw.jsonl"),
        "{\"thread_id\": \"t1\", \"posts\": [\"Quiz 2 question\", \"I watched lecture 3. Still lost on hw2!\"]}\n",
    )
    .unwrap();
    let v = stdout_json(&run(dir.path(), &["corpus-build", "--input", "raw.jsonl", "--out", "threads.jsonl", "--json"]));
    assert_eq!(v["sentences"], 3);
    let o = run(dir.path(), &["corpus-build", "--input", "threads.jsonl", "--out", "again.jsonl"]);
    assert_eq!(o.status.code(), Some(1), "sentence lists are not raw posts");
}
