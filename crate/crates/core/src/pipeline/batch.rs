use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::{Engine, PipelineError, StageTimings};
use crate::corpus_store::{write_atomic, Question};

pub const TRACE_SUBDIR: &str = "traces";
pub const SUMMARY_FILE: &str = "summary.jsonl";

/// One line of `summary.jsonl`, in input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub index: usize,
    pub q_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_book: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<StageTimings>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub answered: usize,
    pub failed: usize,
    /// `(q_id, error)` for each failed question, in input order.
    pub failures: Vec<(String, String)>,
    /// Mean over answered questions.
    pub mean_timings_ms: StageTimings,
    pub trace_dir: PathBuf,
    pub summary_path: PathBuf,
}

impl BatchReport {
    /// 0 when every question was answered, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            0
        } else {
            1
        }
    }
}

/// Answer every question with at most `parallelism` in flight. Each
/// question gets `<out>/traces/<trace_id>.json` (partial on failure) and a
/// row in `<out>/summary.jsonl`; rows follow input order regardless of
/// completion order. Per-question failures are recorded and the batch goes
/// on; only output errors abort it.
pub async fn run_batch(
    engine: Arc<Engine>,
    questions: &[Question],
    out_dir: &Path,
    parallelism: usize,
) -> Result<BatchReport, PipelineError> {
    let trace_dir = out_dir.join(TRACE_SUBDIR);
    std::fs::create_dir_all(&trace_dir).map_err(|e| PipelineError::Persist {
        path: trace_dir.clone(),
        message: e.to_string(),
    })?;

    // permits are taken before spawning, so questions start in input order
    let permits = Arc::new(Semaphore::new(parallelism.max(1)));
    let mut handles = Vec::with_capacity(questions.len());
    for q in questions.iter().cloned() {
        let permit = permits.clone().acquire_owned().await.expect("semaphore open");
        let engine = engine.clone();
        handles.push(tokio::spawn(async move {
            let result = engine.answer(&q).await;
            drop(permit);
            (q, result)
        }));
    }

    let mut report = BatchReport {
        total: questions.len(),
        trace_dir: trace_dir.clone(),
        summary_path: out_dir.join(SUMMARY_FILE),
        ..Default::default()
    };
    let mut summary = Vec::new();
    let mut timing_sum = StageTimings::default();
    for (index, handle) in handles.into_iter().enumerate() {
        let (q, result) = handle.await.map_err(|e| PipelineError::Persist {
            path: out_dir.to_path_buf(),
            message: format!("worker panicked: {e}"),
        })?;
        let row = match result {
            Ok(answered) => {
                answered.trace.persist(&trace_dir)?;
                report.answered += 1;
                timing_sum.add(&answered.timings);
                let answer = answered.trace.answer.as_ref();
                SummaryRow {
                    index,
                    q_id: q.q_id.clone(),
                    ok: true,
                    trace_id: Some(answered.trace.trace_id.clone()),
                    answer: answer.map(|a| a.text.clone()),
                    closed_book: answer.map(|a| a.closed_book),
                    warnings: answered.trace.warnings.clone(),
                    error: None,
                    timings_ms: Some(answered.timings),
                }
            }
            Err(e) => {
                tracing::error!("{e}");
                let trace_id = match e.trace() {
                    Some(t) => {
                        t.persist(&trace_dir)?;
                        Some(t.trace_id.clone())
                    }
                    None => None,
                };
                report.failed += 1;
                report.failures.push((q.q_id.clone(), e.to_string()));
                SummaryRow {
                    index,
                    q_id: q.q_id.clone(),
                    ok: false,
                    trace_id,
                    answer: None,
                    closed_book: None,
                    warnings: e.trace().map(|t| t.warnings.clone()).unwrap_or_default(),
                    error: Some(e.to_string()),
                    timings_ms: None,
                }
            }
        };
        summary.extend(serde_json::to_vec(&row).expect("row serializes"));
        summary.push(b'\n');
    }
    if report.answered > 0 {
        report.mean_timings_ms = timing_sum.scaled(1.0 / report.answered as f64);
    }
    write_atomic(&report.summary_path, &summary).map_err(|e| PipelineError::Persist {
        path: report.summary_path.clone(),
        message: e.to_string(),
    })?;
    Ok(report)
}

pub fn read_summary(path: &Path) -> std::io::Result<Vec<SummaryRow>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    file.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            serde_json::from_str(&l?).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })
        .collect()
}
