mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::*;
use crossqa::backends::mock::Fault;
use crossqa::backends::protocol::GENERATE_ROUTE;
use crossqa::pipeline::{read_summary, run_batch, Setting};

fn trace_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir.join("traces"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn three_questions_give_three_traces_and_rows() {
    let tmp = tempfile::tempdir().unwrap();
    build_store(&tmp.path().join("store"));
    let backend = reference_backend().await;
    let engine = engine(config(&tmp.path().join("store"), &backend.url(), Setting::Cross));
    let qs: Vec<_> = questions().into_iter().take(3).collect();
    let out = tmp.path().join("out");
    let report = run_batch(engine, &qs, &out, 2).await.unwrap();
    assert_eq!((report.total, report.answered, report.failed), (3, 3, 0));
    assert_eq!(report.exit_code(), 0);
    assert_eq!(trace_files(&out).len(), 3);
    let rows = read_summary(&report.summary_path).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, q) in rows.iter().zip(&qs) {
        assert_eq!(row.q_id, q.q_id);
        assert!(row.ok);
        assert!(row.timings_ms.is_some());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn a_failing_question_is_recorded_and_the_batch_continues() {
    let tmp = tempfile::tempdir().unwrap();
    build_store(&tmp.path().join("store"));
    let backend = reference_backend().await;
    let engine = engine(config(&tmp.path().join("store"), &backend.url(), Setting::Mono));
    let qs: Vec<_> = questions().into_iter().take(3).collect();
    backend.push_fault(GENERATE_ROUTE, Fault::Status(500));
    let out = tmp.path().join("out");
    // one at a time so the fault hits the first question
    let report = run_batch(engine, &qs, &out, 1).await.unwrap();
    assert_eq!((report.answered, report.failed), (2, 1));
    assert_eq!(report.exit_code(), 1);
    let rows = read_summary(&report.summary_path).unwrap();
    assert!(!rows[0].ok);
    assert!(rows[0].error.as_deref().unwrap().contains("generation failed"));
    assert!(rows[1].ok && rows[2].ok);
    // the failed question still has its partial trace
    let failed_trace = out.join("traces").join(format!("{}.json", rows[0].trace_id.as_ref().unwrap()));
    let trace: serde_json::Value = serde_json::from_slice(&std::fs::read(failed_trace).unwrap()).unwrap();
    assert!(trace.get("prompt").is_some());
    assert!(trace.get("answer").is_none());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reruns_and_thread_counts_give_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    build_store(&tmp.path().join("store"));
    let backend = reference_backend().await;
    let engine = engine(config(&tmp.path().join("store"), &backend.url(), Setting::Cross));
    let qs = questions();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run_batch(engine.clone(), &qs, &a, 1).await.unwrap();
    run_batch(engine.clone(), &qs, &b, 1).await.unwrap();
    run_batch(engine, &qs, &c, 8).await.unwrap();
    let ta = trace_files(&a);
    assert_eq!(ta.len(), qs.len());
    assert_eq!(ta, trace_files(&b));
    assert_eq!(ta, trace_files(&c));
    let order = |dir: &Path| -> Vec<String> {
        read_summary(&dir.join("summary.jsonl")).unwrap().into_iter().map(|r| r.q_id).collect()
    };
    assert_eq!(order(&a), order(&c));
}
