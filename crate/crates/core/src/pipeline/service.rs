//! HTTP answer service: `POST /answer`, `GET /healthz`, `GET /trace/{id}`.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::{AnswerOptions, Engine, PipelineConfig, PipelineError, Setting};
use crate::aggregation::AggregationPolicy;
use crate::corpus_store::Question;
use crate::lang::Lang;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub question: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<AggregationPolicy>,
    /// Identifier used for the trace; derived from the request when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub text: String,
    pub lang: Lang,
    pub score: f64,
    pub doc_id: u32,
    pub sent_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: String,
    pub closed_book: bool,
    pub candidates: Vec<CandidateView>,
    pub trace_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<String>,
}

/// Shared state. The engine slot is empty while indices load.
pub struct ServiceState {
    engine: RwLock<Option<Arc<Engine>>>,
    trace_dir: PathBuf,
}

impl ServiceState {
    pub fn loading(trace_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(ServiceState {
            engine: RwLock::new(None),
            trace_dir: trace_dir.into(),
        })
    }

    pub fn ready(engine: Arc<Engine>, trace_dir: impl Into<PathBuf>) -> Arc<Self> {
        let state = Self::loading(trace_dir);
        state.set_engine(engine);
        state
    }

    pub fn set_engine(&self, engine: Arc<Engine>) {
        *self.engine.write().expect("engine lock") = Some(engine);
    }

    fn engine(&self) -> Option<Arc<Engine>> {
        self.engine.read().expect("engine lock").clone()
    }
}

fn error(status: StatusCode, msg: impl ToString, trace_id: Option<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: msg.to_string(),
            trace_id,
        }),
    )
        .into_response()
}

fn request_q_id(req: &AnswerRequest) -> String {
    let key = format!("{}\0{}", req.lang, req.question);
    format!("req-{}", &super::config::sha256_hex(key.as_bytes())[..16])
}

async fn answer(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let Some(engine) = state.engine() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "indices are loading", None);
    };
    let req: AnswerRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}"), None),
    };
    if req.question.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty question", None);
    }
    let lang = match Lang::new(&req.lang) {
        Ok(l) => l,
        Err(e) => return error(StatusCode::BAD_REQUEST, e, None),
    };
    if !engine.languages().contains(&lang) {
        return error(
            StatusCode::BAD_REQUEST,
            format!("unknown language {lang}; configured: {}", join_langs(engine.languages())),
            None,
        );
    }
    let opts = AnswerOptions {
        setting: req.setting,
        policy: req.policy,
    };
    if let Err(e) = engine.resolve_options(opts) {
        return error(StatusCode::BAD_REQUEST, e, None);
    }
    let q = Question {
        q_id: req.q_id.clone().unwrap_or_else(|| request_q_id(&req)),
        text: req.question.clone(),
        lang,
        gold_doc_title: None,
        gold_passage: None,
        gold_span: None,
        reference_answer: None,
    };

    match engine.answer_with(&q, opts).await {
        Ok(answered) => {
            let trace = answered.trace;
            if let Err(e) = trace.persist(&state.trace_dir) {
                tracing::error!("{e}");
            }
            let answer = trace.answer.clone().expect("answered trace has an answer");
            let candidates = trace
                .m
                .as_ref()
                .map(|m| {
                    m.candidates
                        .iter()
                        .map(|c| CandidateView {
                            text: c.text.clone(),
                            lang: c.lang.clone(),
                            score: c.score.unwrap_or_default(),
                            doc_id: c.doc_id,
                            sent_index: c.sent_index,
                        })
                        .collect()
                })
                .unwrap_or_default();
            Json(AnswerResponse {
                answer: answer.text,
                closed_book: answer.closed_book,
                candidates,
                trace_id: trace.trace_id,
                warnings: trace.warnings,
            })
            .into_response()
        }
        Err(e) => {
            let trace_id = e.trace().map(|t| {
                if let Err(pe) = t.persist(&state.trace_dir) {
                    tracing::error!("{pe}");
                }
                t.trace_id.clone()
            });
            let status = match &e {
                e if e.is_backend_failure() => StatusCode::BAD_GATEWAY,
                PipelineError::UnknownLanguage(_) | PipelineError::Config(_) => StatusCode::BAD_REQUEST,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            };
            error(status, e, trace_id)
        }
    }
}

fn join_langs(langs: &[Lang]) -> String {
    langs.iter().map(Lang::as_str).collect::<Vec<_>>().join(", ")
}

async fn healthz(State(state): State<Arc<ServiceState>>) -> Response {
    if state.engine().is_some() {
        (StatusCode::OK, "ok").into_response()
    } else {
        (StatusCode::SERVICE_UNAVAILABLE, "loading").into_response()
    }
}

async fn trace(State(state): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> Response {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_hexdigit()) {
        return error(StatusCode::BAD_REQUEST, "trace ids are hexadecimal", None);
    }
    match tokio::fs::read(state.trace_dir.join(format!("{id}.json"))).await {
        Ok(bytes) => (StatusCode::OK, [("content-type", "application/json")], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            error(StatusCode::NOT_FOUND, format!("no trace {id}"), None)
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e, None),
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/answer", post(answer))
        .route("/healthz", get(healthz))
        .route("/trace/{id}", get(trace))
        .with_state(state)
}

/// Bind first, then load the engine in the background; requests arriving
/// before it is ready get 503. A load failure stops the server and is
/// returned.
pub async fn serve(cfg: PipelineConfig, listener: TcpListener) -> Result<(), PipelineError> {
    let trace_dir = cfg.trace_dir.clone().unwrap_or_else(|| PathBuf::from("traces"));
    let state = ServiceState::loading(trace_dir);
    let loader = state.clone();
    let (failed_tx, failed_rx) = tokio::sync::oneshot::channel::<PipelineError>();
    tokio::spawn(async move {
        match tokio::task::spawn_blocking(move || Engine::load(cfg)).await {
            Ok(Ok(engine)) => {
                loader.set_engine(Arc::new(engine));
                tracing::info!("engine ready");
            }
            Ok(Err(e)) => {
                let _ = failed_tx.send(e);
            }
            Err(e) => {
                let _ = failed_tx.send(PipelineError::Config(format!("engine loader panicked: {e}")));
            }
        }
    });
    let failure = Arc::new(std::sync::Mutex::new(None));
    let slot = failure.clone();
    let shutdown = async move {
        match failed_rx.await {
            Ok(e) => *slot.lock().expect("failure slot") = Some(e),
            // the sender is dropped unused once the engine is ready: run forever
            Err(_) => std::future::pending::<()>().await,
        }
    };
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| PipelineError::Config(format!("server: {e}")))?;
    let failed = failure.lock().expect("failure slot").take();
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
