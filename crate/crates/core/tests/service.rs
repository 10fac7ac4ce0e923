mod common;

use std::sync::Arc;

use common::*;
use crossqa::backends::mock::Fault;
use crossqa::backends::protocol::GENERATE_ROUTE;
use crossqa::pipeline::service::{router, AnswerResponse, ErrorBody, ServiceState};
use crossqa::pipeline::Setting;
use serde_json::json;

struct Stack {
    _tmp: tempfile::TempDir,
    backend: crossqa::backends::mock::MockServer,
    url: String,
    state: Arc<ServiceState>,
}

async fn spawn(state: Arc<ServiceState>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("http://{addr}")
}

async fn stack() -> Stack {
    let tmp = tempfile::tempdir().unwrap();
    build_store(&tmp.path().join("store"));
    let backend = reference_backend().await;
    let engine = engine(config(&tmp.path().join("store"), &backend.url(), Setting::Cross));
    let state = ServiceState::ready(engine, tmp.path().join("traces"));
    let url = spawn(state.clone()).await;
    Stack {
        _tmp: tmp,
        backend,
        url,
        state,
    }
}

async fn post(url: &str, body: &str) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("{url}/answer"))
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap()
}

#[tokio::test]
async fn answer_happy_path_with_provenance() {
    let s = stack().await;
    let resp = post(&s.url, &json!({"question": "What is the capital of France?", "lang": "en"}).to_string()).await;
    assert_eq!(resp.status(), 200);
    let body: AnswerResponse = resp.json().await.unwrap();
    assert_eq!(body.answer, "The capital of France is Paris.");
    assert!(!body.closed_book);
    assert!(!body.candidates.is_empty() && body.candidates.len() <= 10);
    assert_eq!(body.candidates[0].text, body.answer);
    assert!(body.candidates.windows(2).all(|w| w[0].score >= w[1].score));

    let trace = reqwest::get(format!("{}/trace/{}", s.url, body.trace_id)).await.unwrap();
    assert_eq!(trace.status(), 200);
    let trace: serde_json::Value = trace.json().await.unwrap();
    assert_eq!(trace["trace_id"], body.trace_id.as_str());
    assert_eq!(trace["answer"]["text"], body.answer.as_str());
    let _ = &s.state;
}

#[tokio::test]
async fn request_overrides_setting() {
    let s = stack().await;
    let resp = post(&s.url, &json!({"question": "Какая столица Китая?", "lang": "ru", "setting": "mono"}).to_string()).await;
    assert_eq!(resp.status(), 200);
    let body: AnswerResponse = resp.json().await.unwrap();
    assert_eq!(body.answer, "Столица Китая — Пекин.");
    assert!(body.candidates.iter().all(|c| c.lang.as_str() == "ru"));
}

#[tokio::test]
async fn bad_requests_get_400() {
    let s = stack().await;
    for (body, needle) in [
        (json!({"question": "Wer?", "lang": "de"}).to_string(), "unknown language de"),
        (json!({"question": "Who?", "lang": "english"}).to_string(), "invalid language"),
        ("{not json".to_string(), "malformed request"),
        (json!({"lang": "en"}).to_string(), "malformed request"),
        (json!({"question": " ", "lang": "en"}).to_string(), "empty question"),
        (json!({"question": "Who?", "lang": "en", "policy": {"kind": "mono-top-k", "k": 5}}).to_string(), "cross setting"),
    ] {
        let resp = post(&s.url, &body).await;
        assert_eq!(resp.status(), 400, "{body}");
        let err: ErrorBody = resp.json().await.unwrap();
        assert!(err.error.contains(needle), "{} lacks {needle}", err.error);
    }
}

#[tokio::test]
async fn dead_generator_gives_502_and_a_partial_trace() {
    let s = stack().await;
    s.backend.push_fault(GENERATE_ROUTE, Fault::Status(500));
    let resp = post(&s.url, &json!({"question": "What is the capital of Brazil?", "lang": "en"}).to_string()).await;
    assert_eq!(resp.status(), 502);
    let err: ErrorBody = resp.json().await.unwrap();
    let id = err.trace_id.expect("partial trace id");
    let trace: serde_json::Value = reqwest::get(format!("{}/trace/{id}", s.url)).await.unwrap().json().await.unwrap();
    assert!(trace["prompt"]["text"].as_str().unwrap().starts_with("question: What is the capital of Brazil?"));
    assert!(trace.get("answer").is_none());
}

#[tokio::test]
async fn unreachable_generator_gives_502() {
    let tmp = tempfile::tempdir().unwrap();
    build_store(&tmp.path().join("store"));
    let backend = reference_backend().await;
    let mut cfg = config(&tmp.path().join("store"), &backend.url(), Setting::Mono);
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    cfg.backends.generate.endpoint = format!("http://{}", dead.local_addr().unwrap());
    drop(dead);
    let state = ServiceState::ready(engine(cfg), tmp.path().join("traces"));
    let url = spawn(state).await;
    let resp = post(&url, &json!({"question": "What is the capital of India?", "lang": "en"}).to_string()).await;
    assert_eq!(resp.status(), 502);
}

#[tokio::test]
async fn loading_service_answers_503() {
    let tmp = tempfile::tempdir().unwrap();
    let url = spawn(ServiceState::loading(tmp.path())).await;
    let resp = post(&url, &json!({"question": "q", "lang": "en"}).to_string()).await;
    assert_eq!(resp.status(), 503);
    assert_eq!(reqwest::get(format!("{url}/healthz")).await.unwrap().status(), 503);
}

#[tokio::test]
async fn healthz_and_trace_lookup() {
    let s = stack().await;
    assert_eq!(reqwest::get(format!("{}/healthz", s.url)).await.unwrap().status(), 200);
    assert_eq!(reqwest::get(format!("{}/trace/abc123", s.url)).await.unwrap().status(), 404);
    assert_eq!(reqwest::get(format!("{}/trace/..%2Fsecret", s.url)).await.unwrap().status(), 400);
}

#[tokio::test]
async fn concurrent_requests_agree() {
    let s = stack().await;
    let qs = questions();
    let calls = qs.iter().map(|q| {
        let url = s.url.clone();
        let body = json!({"question": q.text, "lang": q.lang.as_str()}).to_string();
        async move { post(&url, &body).await.json::<AnswerResponse>().await.unwrap() }
    });
    let parallel = futures::future::join_all(calls).await;
    for (q, got) in qs.iter().zip(&parallel) {
        let again: AnswerResponse = post(&s.url, &json!({"question": q.text, "lang": q.lang.as_str()}).to_string())
            .await
            .json()
            .await
            .unwrap();
        assert_eq!(got, &again);
    }
}
