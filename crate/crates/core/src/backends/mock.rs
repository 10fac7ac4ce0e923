//! In-process backend speaking the wire protocol with deterministic
//! reference behaviors: dictionary-or-echo translation, lexical scoring and
//! extractive generation. Faults can be scripted per route for tests.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::protocol::*;
use crate::as2::lexical_score_text;

/// Target language → (source text → translation).
pub type TranslateMap = HashMap<String, HashMap<String, String>>;

#[derive(Clone, Debug, Default)]
pub struct ReferenceBehavior {
    pub translate_map: TranslateMap,
}

impl ReferenceBehavior {
    /// Load a translate map from a JSON object `{ "<tgt>": { "<src text>": "<translation>" } }`.
    pub fn from_map_file(path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let translate_map = serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(ReferenceBehavior { translate_map })
    }

    pub fn translate(&self, req: &TranslateRequest) -> String {
        self.translate_map
            .get(&req.target_lang)
            .and_then(|m| m.get(&req.text))
            .cloned()
            .unwrap_or_else(|| format!("⟪{}⟫ {}", req.target_lang, req.text))
    }

    pub fn score(&self, req: &ScoreRequest) -> Vec<f64> {
        req.candidates
            .iter()
            .map(|c| lexical_score_text(&req.question, c))
            .collect()
    }

    pub fn generate(&self, req: &GenerateRequest) -> String {
        req.candidates
            .first()
            .map(|c| c.text.clone())
            .unwrap_or_else(|| NO_CONTEXT_ANSWER.to_string())
    }
}

/// A scripted misbehavior consumed by the next request to a route.
#[derive(Clone, Debug)]
pub enum Fault {
    Status(u16),
    Delay(Duration),
    /// Reply 200 with this raw body.
    RawBody(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub route: String,
    pub body: String,
}

#[derive(Default)]
struct MockState {
    behavior: ReferenceBehavior,
    faults: Mutex<HashMap<String, VecDeque<Fault>>>,
    log: Mutex<Vec<LoggedRequest>>,
}

fn bad_request(msg: impl ToString) -> Response {
    (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": msg.to_string() }))).into_response()
}

async fn handle(state: &MockState, route: &str, body: Bytes) -> Response {
    state.log.lock().unwrap().push(LoggedRequest {
        route: route.to_string(),
        body: String::from_utf8_lossy(&body).into_owned(),
    });
    let fault = state
        .faults
        .lock()
        .unwrap()
        .get_mut(route)
        .and_then(VecDeque::pop_front);
    match fault {
        Some(Fault::Status(code)) => {
            let code = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (code, "scripted failure").into_response();
        }
        Some(Fault::Delay(d)) => tokio::time::sleep(d).await,
        Some(Fault::RawBody(raw)) => {
            return (StatusCode::OK, [("content-type", "application/json")], raw).into_response()
        }
        None => {}
    }

    let b = &state.behavior;
    match route {
        TRANSLATE_ROUTE => match serde_json::from_slice::<TranslateRequest>(&body) {
            Ok(req) => Json(TranslateResponse { translation: b.translate(&req) }).into_response(),
            Err(e) => bad_request(e),
        },
        SCORE_ROUTE => match serde_json::from_slice::<ScoreRequest>(&body) {
            Ok(req) => Json(ScoreResponse { scores: b.score(&req) }).into_response(),
            Err(e) => bad_request(e),
        },
        GENERATE_ROUTE => match serde_json::from_slice::<GenerateRequest>(&body) {
            Ok(req) => Json(GenerateResponse { answer: b.generate(&req) }).into_response(),
            Err(e) => bad_request(e),
        },
        _ => StatusCode::NOT_FOUND.into_response(),
    }
}

fn router(state: Arc<MockState>) -> Router {
    Router::new()
        .route(
            TRANSLATE_ROUTE,
            post(|State(s): State<Arc<MockState>>, body: Bytes| async move { handle(&s, TRANSLATE_ROUTE, body).await }),
        )
        .route(
            SCORE_ROUTE,
            post(|State(s): State<Arc<MockState>>, body: Bytes| async move { handle(&s, SCORE_ROUTE, body).await }),
        )
        .route(
            GENERATE_ROUTE,
            post(|State(s): State<Arc<MockState>>, body: Bytes| async move { handle(&s, GENERATE_ROUTE, body).await }),
        )
        .with_state(state)
}

/// A running mock backend. The server stops when this is dropped.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    task: JoinHandle<()>,
}

impl MockServer {
    pub async fn start(behavior: ReferenceBehavior) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", behavior).await
    }

    pub async fn bind(addr: &str, behavior: ReferenceBehavior) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            behavior,
            ..Default::default()
        });
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(MockServer { addr, state, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn push_fault(&self, route: &str, fault: Fault) {
        self.state
            .faults
            .lock()
            .unwrap()
            .entry(route.to_string())
            .or_default()
            .push_back(fault);
    }

    pub fn log(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().unwrap().clone()
    }

    pub fn request_count(&self, route: &str) -> usize {
        self.state.log.lock().unwrap().iter().filter(|r| r.route == route).count()
    }

    /// Serve until the task ends (used by the CLI).
    pub async fn wait(mut self) {
        let _ = (&mut self.task).await;
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
