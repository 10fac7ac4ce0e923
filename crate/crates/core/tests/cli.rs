mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn crossqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossqa"))
        .args(args)
        .env_remove("CROSSQA_TRANSLATE_URL")
        .env_remove("CROSSQA_SCORE_URL")
        .env_remove("CROSSQA_GENERATE_URL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_index_search_and_hit_at_n() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let corpus = fixtures().join("corpus/en.jsonl");
    let stats: serde_json::Value =
        serde_json::from_str(&ok(crossqa(&["ingest", "--lang", "en", "--input", p(&corpus), "--store", p(&store)]))).unwrap();
    assert_eq!(stats["n_docs"], 60);

    let index = tmp.path().join("en.bm25");
    ok(crossqa(&["index", "--lang", "en", "--store", p(&store), "--out", p(&index)]));
    let first = std::fs::read(&index).unwrap();
    ok(crossqa(&["index", "--lang", "en", "--store", p(&store), "--out", p(&index)]));
    assert_eq!(first, std::fs::read(&index).unwrap(), "rebuilds are byte-identical");

    let hits = ok(crossqa(&["search", "--index", p(&index), "--query", "capital of Brazil", "--n", "3"]));
    let lines: Vec<serde_json::Value> = hits.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["title"], "Brazil");

    let questions = fixtures().join("questions.jsonl");
    let report: serde_json::Value = serde_json::from_str(&ok(crossqa(&[
        "eval-retrieval", "--index", p(&index), "--questions", p(&questions), "--n", "1",
    ])))
    .unwrap();
    assert_eq!(report["evaluated"], 4);
    assert_eq!(report["hit_rate"], 1.0);
}

#[test]
fn segment_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let text = tmp.path().join("t.txt");
    std::fs::write(&text, "Dr. Smith arrived. He left!").unwrap();
    let out = ok(crossqa(&["segment", "--lang", "en", "--input", p(&text)]));
    assert_eq!(out.lines().count(), 2);

    let votes = tmp.path().join("votes.jsonl");
    std::fs::write(&votes, "{\"item_id\":\"a\",\"votes\":[1,1,0]}\n{\"item_id\":\"b\",\"votes\":[1,1,1]}\n{\"item_id\":\"c\",\"votes\":[1,0,1]}\n").unwrap();
    let acc: serde_json::Value = serde_json::from_str(&ok(crossqa(&["evaluate", "--metric", "accuracy", "--input", p(&votes)]))).unwrap();
    assert!((acc["value"].as_f64().unwrap() - 7.0 / 9.0).abs() < 1e-12);

    let pairs = tmp.path().join("pairs.jsonl");
    std::fs::write(&pairs, "{\"item_id\":\"1\",\"hypothesis\":\"the cat sat on the mat\",\"reference\":\"the cat sat on the mat\",\"lang\":\"en\"}\n").unwrap();
    let b: serde_json::Value = serde_json::from_str(&ok(crossqa(&["evaluate", "--metric", "bleu", "--input", p(&pairs)]))).unwrap();
    assert!((b["value"].as_f64().unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn build_as2_dataset_from_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    build_store(tmp.path());
    let out = tmp.path().join("as2.jsonl");
    let report: serde_json::Value = serde_json::from_str(&ok(crossqa(&[
        "build-as2",
        "--questions",
        p(&fixtures().join("questions.jsonl")),
        "--store",
        p(tmp.path()),
        "--out",
        p(&out),
    ])))
    .unwrap();
    assert_eq!(report["emitted_questions"], 20);
    // four sentences per article, one positive each
    assert_eq!(report["pairs"], 80);
    assert_eq!(report["positives"], 20);
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 80);
}

#[test]
fn fatal_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = crossqa(&["index", "--lang", "en", "--store", p(tmp.path()), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "store_root = \"nowhere\"\nbogus_key = 1\n").unwrap();
    let o = crossqa(&["run-batch", "--config", p(&cfg), "--questions", "q", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));
}

#[test]
fn run_batch_end_to_end() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let backend = rt.block_on(reference_backend());
    let tmp = tempfile::tempdir().unwrap();
    build_store(&tmp.path().join("store"));
    let cfg = tmp.path().join("crossqa.toml");
    std::fs::write(
        &cfg,
        format!(
            "store_root = \"store\"\nsetting = \"cross\"\nparallelism = 4\n\n[backends.translate]\nendpoint = \"{0}\"\n\n[backends.generate]\nendpoint = \"{0}\"\n",
            backend.url()
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = crossqa(&[
        "run-batch",
        "--config",
        p(&cfg),
        "--questions",
        p(&fixtures().join("questions.jsonl")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.jsonl")).unwrap();
    assert_eq!(summary.lines().count(), 20);

    let o = crossqa(&["answer", "--config", p(&cfg), "--question", "What is the capital of Kenya?", "--lang", "en"]);
    let trace: serde_json::Value = serde_json::from_str(&ok(o)).unwrap();
    assert_eq!(trace["answer"]["text"], "The capital of Kenya is Nairobi.");
    drop(backend);
}
