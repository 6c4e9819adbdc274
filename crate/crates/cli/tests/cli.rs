use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_patchscope");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const OLD: &str = "int BUF_SIZE;\nint buf_alloc(int n) {\n  return n + BUF_SIZE;\n}\n";
const NEW: &str = "int BUF_SIZE;\nint buf_alloc(int n) {\n  return n + 2 * BUF_SIZE;\n}\n";

#[test]
fn help_lists_every_flag_and_command() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for word in [
        "--config",
        "--seed",
        "--jobs",
        "--quiet",
        "parse",
        "diff",
        "corpus",
        "train-embed",
        "train",
        "predict",
        "evaluate",
        "synth",
        "report",
    ] {
        assert!(text.contains(word), "help lacks {word}");
    }
    for sub in ["diff", "train", "predict", "evaluate", "synth"] {
        assert!(run(dir.path(), &[sub, "--help"]).status.success());
    }
}

#[test]
fn diff_of_identical_files_is_all_unchanged() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.c"), OLD).unwrap();
    let o = run(dir.path(), &["diff", "a.c", "a.c"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("added=0 deleted=0"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let nodes = v["nodes"].as_array().unwrap();
    assert!(!nodes.is_empty());
    assert!(nodes.iter().all(|n| n["ann"] == "U"));
    assert!(v["edges"].as_array().unwrap().iter().all(|e| e[2] == "U"));
}

#[test]
fn diff_of_scaled_bound_marks_the_multiplication_added() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("old.c"), OLD).unwrap();
    fs::write(dir.path().join("new.c"), NEW).unwrap();
    let o = run(dir.path(), &["diff", "old.c", "new.c", "--format", "dot"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("added=2 deleted=0"));
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    let added: Vec<&str> = dot
        .lines()
        .filter(|l| l.contains("label=") && l.ends_with("// A"))
        .collect();
    assert_eq!(added.len(), 2, "{dot}");
    assert!(added.iter().any(|l| l.contains("BinaryExpr\\n*")));
    assert!(added.iter().any(|l| l.contains("Literal\\n2")));
}

#[test]
fn diff_with_missing_file_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.c"), OLD).unwrap();
    let o = run(dir.path(), &["diff", "a.c", "missing.c"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("missing.c"));

    fs::write(dir.path().join("bad.c"), "int f( {").unwrap();
    let o = run(dir.path(), &["diff", "a.c", "bad.c"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn parse_output_ingests_back() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.c"), OLD).unwrap();
    let o = run(dir.path(), &["parse", "a.c", "-o", "a.json"]);
    assert!(o.status.success());
    let first = fs::read_to_string(dir.path().join("a.json")).unwrap();
    let again = run(dir.path(), &["parse", "a.json"]);
    assert!(again.status.success());
    assert_eq!(stdout(&again), first);
}

#[test]
fn synth_is_balanced_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = run(dir.path(), &["--seed", "4", "synth", "--n", "10"]);
    assert!(a.status.success());
    let text = stdout(&a);
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines.iter().filter(|v| v["label"] == 1).count(), 5);
    assert_eq!(
        stdout(&run(dir.path(), &["--seed", "4", "synth", "--n", "10"])),
        text
    );
    assert_ne!(
        stdout(&run(dir.path(), &["--seed", "5", "synth", "--n", "10"])),
        text
    );
    assert_eq!(
        run(dir.path(), &["synth", "--n", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn corpus_reports_its_size() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), &["synth", "--n", "6", "-o", "s.jsonl"])
        .status
        .success());
    let o = run(dir.path(), &["corpus", "s.jsonl", "--min-count", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 6);
    assert!(stderr(&o).contains("sentences=6 vocab="));
}

const SMALL: &[&str] = &["--epochs", "3", "--dim", "8", "--quiet"];

fn train(dir: &Path, out: &str) -> Output {
    let mut args = vec!["--seed", "7", "train", "s.jsonl", "--out-dir", out];
    args.extend_from_slice(SMALL);
    run(dir, &args)
}

#[test]
fn training_is_byte_reproducible_and_predictions_are_stable() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert!(
        run(p, &["--seed", "7", "synth", "--n", "60", "-o", "s.jsonl"])
            .status
            .success()
    );
    let first = train(p, "a");
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(train(p, "b").status.success());
    for f in [
        "model.psgat",
        "embeddings.psemb",
        "history.csv",
        "test.jsonl",
        "config.json",
    ] {
        assert_eq!(
            fs::read(p.join("a").join(f)).unwrap(),
            fs::read(p.join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(
        fs::read_to_string(p.join("a/history.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );

    let predict = [
        "predict",
        "--checkpoint",
        "a/model.psgat",
        "--embeddings",
        "a/embeddings.psemb",
        "a/test.jsonl",
    ];
    let o1 = run(p, &predict);
    assert!(o1.status.success(), "{}", stderr(&o1));
    assert_eq!(stdout(&o1), stdout(&run(p, &predict)));
    let csv = stdout(&o1);
    let test_rows = fs::read_to_string(p.join("a/test.jsonl"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(csv.lines().count(), test_rows + 1);
    for row in csv.lines().skip(1) {
        let score: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
    }
}

#[test]
fn single_class_training_data_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let all = stdout(&run(p, &["synth", "--n", "40"]));
    let fixing: String = all
        .lines()
        .filter(|l| l.contains("\"label\":1"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(p.join("s.jsonl"), fixing).unwrap();
    let o = train(p, "m");
    assert_eq!(o.status.code(), Some(3));
    assert!(!p.join("m/model.psgat").exists());
}

#[test]
fn incompatible_files_exit_with_version_code() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth", "--n", "40", "-o", "s.jsonl"])
        .status
        .success());
    assert!(train(p, "m").status.success());
    fs::write(p.join("old.psgat"), b"PSGAT0\n{}\n").unwrap();
    let o = run(
        p,
        &[
            "predict",
            "--checkpoint",
            "old.psgat",
            "--embeddings",
            "m/embeddings.psemb",
            "s.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    fs::write(p.join("old.psemb"), b"PSEMB0\n{}\n").unwrap();
    let o = run(
        p,
        &[
            "predict",
            "--checkpoint",
            "m/model.psgat",
            "--embeddings",
            "old.psemb",
            "s.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth", "--n", "40", "-o", "s.jsonl"])
        .status
        .success());
    fs::write(
        p.join("cfg.json"),
        r#"{"train": {"epochs": 2}, "embedding": {"dim": 8}}"#,
    )
    .unwrap();
    let o = run(
        p,
        &[
            "--config",
            "cfg.json",
            "--quiet",
            "train",
            "s.jsonl",
            "--out-dir",
            "a",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(p.join("a/history.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let o = run(
        p,
        &[
            "--config",
            "cfg.json",
            "--quiet",
            "train",
            "s.jsonl",
            "--out-dir",
            "b",
            "--epochs",
            "1",
        ],
    );
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(p.join("b/history.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    let used: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("b/config.json")).unwrap()).unwrap();
    assert_eq!(used["embedding"]["dim"], 8);
    assert_eq!(used["train"]["epochs"], 1);

    fs::write(p.join("bad.json"), r#"{"train": {"epochz": 2}}"#).unwrap();
    let o = run(
        p,
        &["--config", "bad.json", "train", "s.jsonl", "--out-dir", "c"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochz"));
    let o = run(p, &["train", "s.jsonl", "--out-dir", "c", "--epochs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_scores(dir: &Path, rows: &[(&str, f64, u8, u64)]) {
    let mut text = String::from("id,score,label,changed_loc\n");
    for (id, s, l, loc) in rows {
        text.push_str(&format!("{id},{s},{l},{loc}\n"));
    }
    fs::write(dir.join("scores.csv"), text).unwrap();
}

fn report(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn evaluate_perfect_scores() {
    let dir = TempDir::new().unwrap();
    write_scores(
        dir.path(),
        &[
            ("a", 0.9, 1, 3),
            ("b", 0.8, 1, 4),
            ("c", 0.2, 0, 5),
            ("d", 0.1, 0, 6),
        ],
    );
    let o = run(
        dir.path(),
        &["evaluate", "scores.csv", "--format", "json", "--ce", "100"],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    for key in ["precision", "recall", "f1", "accuracy", "auc"] {
        assert_eq!(r[key], 1.0, "{key}");
    }
    assert_eq!(r["ce_at"]["100"], 1.0);
}

#[test]
fn evaluate_matches_hand_computed_fixture() {
    let dir = TempDir::new().unwrap();
    // threshold 0.5: tp = {a, c}, fp = {b}, fn = {d, f}, tn = {e}
    write_scores(
        dir.path(),
        &[
            ("a", 0.9, 1, 50),
            ("b", 0.8, 0, 30),
            ("c", 0.7, 1, 20),
            ("d", 0.3, 1, 10),
            ("e", 0.2, 0, 10),
            ("f", 0.2, 1, 10),
        ],
    );
    let o = run(
        dir.path(),
        &[
            "evaluate",
            "scores.csv",
            "--format",
            "json",
            "--ce",
            "5",
            "40",
            "100",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(
        (
            r["tp"].as_u64(),
            r["fp"].as_u64(),
            r["tn"].as_u64(),
            r["fn"].as_u64()
        ),
        (Some(2), Some(1), Some(1), Some(2))
    );
    let close = |v: &serde_json::Value, x: f64| (v.as_f64().unwrap() - x).abs() < 1e-12;
    assert!(close(&r["precision"], 2.0 / 3.0));
    assert!(close(&r["recall"], 0.5));
    assert!(close(&r["f1"], 4.0 / 7.0));
    assert!(close(&r["accuracy"], 0.5));
    // positive/negative pairs won: a 2, c 1, d 1, f 0.5 of 8
    assert!(close(&r["auc"], 4.5 / 8.0));
    // total 130 lines; 40% allows 52, so only "a" (50) fits
    assert!(close(&r["ce_at"]["5"], 0.0));
    assert!(close(&r["ce_at"]["40"], 0.25));
    assert!(close(&r["ce_at"]["100"], 1.0));

    let table = run(
        dir.path(),
        &["evaluate", "scores.csv", "--ce", "5", "10", "20"],
    );
    assert!(table.status.success());
    let text = stdout(&table);
    let ce: Vec<f64> = ["ce@5%", "ce@10%", "ce@20%"]
        .iter()
        .map(|k| {
            let line = text.lines().find(|l| l.starts_with(k)).unwrap();
            line.split_whitespace().last().unwrap().parse().unwrap()
        })
        .collect();
    assert!(ce.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn evaluate_single_class_warns_but_reports() {
    let dir = TempDir::new().unwrap();
    write_scores(dir.path(), &[("a", 0.9, 1, 3), ("b", 0.4, 1, 4)]);
    let o = run(dir.path(), &["evaluate", "scores.csv", "--format", "json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("AUC"));
    let r = report(&o);
    assert!(r["auc"].is_null());
    assert_eq!(r["recall"], 0.5);
}

#[test]
fn bins_report_splits_by_change_size() {
    let dir = TempDir::new().unwrap();
    write_scores(
        dir.path(),
        &[
            ("a", 0.9, 1, 3),
            ("b", 0.1, 0, 4),
            ("c", 0.8, 1, 50),
            ("d", 0.7, 0, 500),
        ],
    );
    let o = run(
        dir.path(),
        &["report", "bins", "scores.csv", "--edges", "10,100"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("[0;10),2,"));
    assert!(rows[2].starts_with("[10;100),1,"));
    assert!(rows[3].starts_with("[100;inf),1,"));
    let o = run(
        dir.path(),
        &["report", "bins", "scores.csv", "--edges", "100,10"],
    );
    assert_eq!(o.status.code(), Some(2));
}
