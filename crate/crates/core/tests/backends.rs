mod common;

use std::time::{Duration, Instant};

use common::lang;
use crossqa::as2::lexical_score_text;
use crossqa::backends::conformance::{parity_fixture_pairs, run_conformance, ConformanceTargets, PARITY_TOLERANCE};
use crossqa::backends::mock::{Fault, MockServer, ReferenceBehavior};
use crossqa::backends::protocol::{GENERATE_ROUTE, SCORE_ROUTE, TRANSLATE_ROUTE};
use crossqa::backends::{BackendClient, BackendConfig, Role, WireCandidate, WireErrorKind, NO_CONTEXT_ANSWER};

fn client(role: Role, server: &MockServer, retries: u32) -> std::sync::Arc<BackendClient> {
    let mut cfg = BackendConfig::new(role, server.url());
    cfg.max_retries = retries;
    cfg.backoff_base_ms = 5;
    cfg.timeout_ms = 2_000;
    BackendClient::new(cfg).unwrap()
}

#[tokio::test]
async fn server_error_then_success_is_retried() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    server.push_fault(TRANSLATE_ROUTE, Fault::Status(500));
    let c = client(Role::Translate, &server, 2);
    let out = c.translate("hello", &lang("en"), &lang("ja")).await.unwrap();
    assert_eq!(out, "⟪ja⟫ hello");
    let stats = c.stats();
    assert_eq!((stats.calls, stats.attempts, stats.retries), (1, 2, 1));
    assert_eq!(server.request_count(TRANSLATE_ROUTE), 2);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    server.push_fault(SCORE_ROUTE, Fault::Status(422));
    let c = client(Role::Score, &server, 3);
    let err = c.score("q", &["c".to_string()]).await.unwrap_err();
    assert_eq!(err.kind, WireErrorKind::Protocol);
    assert_eq!(server.request_count(SCORE_ROUTE), 1);
}

#[tokio::test]
async fn retries_are_bounded() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    for _ in 0..5 {
        server.push_fault(GENERATE_ROUTE, Fault::Status(503));
    }
    let c = client(Role::Generate, &server, 2);
    let err = c.generate("q", &[], &lang("en"), 100).await.unwrap_err();
    assert_eq!(err.kind, WireErrorKind::RemoteFailure);
    assert_eq!(server.request_count(GENERATE_ROUTE), 3);
}

#[tokio::test]
async fn timeouts_are_classified_and_retried() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    server.push_fault(TRANSLATE_ROUTE, Fault::Delay(Duration::from_millis(600)));
    let mut cfg = BackendConfig::new(Role::Translate, server.url());
    cfg.timeout_ms = 150;
    cfg.max_retries = 1;
    cfg.backoff_base_ms = 1;
    let c = BackendClient::new(cfg).unwrap();
    assert_eq!(c.translate("x", &lang("en"), &lang("ru")).await.unwrap(), "⟪ru⟫ x");
    assert_eq!(c.stats().retries, 1);

    server.push_fault(TRANSLATE_ROUTE, Fault::Delay(Duration::from_millis(600)));
    server.push_fault(TRANSLATE_ROUTE, Fault::Delay(Duration::from_millis(600)));
    let err = c.translate("x", &lang("en"), &lang("ru")).await.unwrap_err();
    assert_eq!(err.kind, WireErrorKind::Timeout);
}

#[tokio::test]
async fn unreachable_backend_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let mut cfg = BackendConfig::new(Role::Generate, format!("http://{addr}"));
    cfg.max_retries = 1;
    cfg.backoff_base_ms = 1;
    let c = BackendClient::new(cfg).unwrap();
    let err = c.generate("q", &[], &lang("en"), 10).await.unwrap_err();
    assert_eq!(err.kind, WireErrorKind::Transport);
    assert_eq!(c.stats().attempts, 2);
}

#[tokio::test]
async fn malformed_responses_are_protocol_errors() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    let c = client(Role::Score, &server, 2);
    server.push_fault(SCORE_ROUTE, Fault::RawBody(r#"{"score":[1.0]}"#.into()));
    assert_eq!(c.score("q", &["a".into()]).await.unwrap_err().kind, WireErrorKind::Protocol);
    server.push_fault(SCORE_ROUTE, Fault::RawBody(r#"{"scores":[1.0, 0.5]}"#.into()));
    assert_eq!(c.score("q", &["a".into()]).await.unwrap_err().kind, WireErrorKind::Protocol);
    let g = client(Role::Generate, &server, 2);
    server.push_fault(GENERATE_ROUTE, Fault::RawBody(r#"{"answer":"  "}"#.into()));
    assert_eq!(g.generate("q", &[], &lang("en"), 5).await.unwrap_err().kind, WireErrorKind::Protocol);
    // none of these were retried
    assert_eq!(server.request_count(SCORE_ROUTE) + server.request_count(GENERATE_ROUTE), 3);
}

#[tokio::test]
async fn in_flight_requests_are_bounded() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    for _ in 0..4 {
        server.push_fault(SCORE_ROUTE, Fault::Delay(Duration::from_millis(150)));
    }
    let mut cfg = BackendConfig::new(Role::Score, server.url());
    cfg.max_in_flight = 1;
    let c = BackendClient::new(cfg).unwrap();
    let started = Instant::now();
    let calls = (0..4).map(|i| {
        let c = c.clone();
        async move { c.score("q", &[format!("c{i}")]).await }
    });
    for r in futures::future::join_all(calls).await {
        r.unwrap();
    }
    assert!(started.elapsed() >= Duration::from_millis(600), "{:?}", started.elapsed());
}

#[tokio::test]
async fn same_language_translation_skips_the_backend() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    let c = client(Role::Translate, &server, 0);
    assert_eq!(c.translate("नमस्ते", &lang("hi"), &lang("hi")).await.unwrap(), "नमस्ते");
    assert_eq!(server.request_count(TRANSLATE_ROUTE), 0);
}

#[tokio::test]
async fn reference_behaviors() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    let s = client(Role::Score, &server, 0);
    assert_eq!(s.score("the cat", &["the cat".into()]).await.unwrap(), [1.0]);
    let g = client(Role::Generate, &server, 0);
    let cands = [
        WireCandidate { text: "A".into(), lang: "en".into() },
        WireCandidate { text: "B".into(), lang: "ja".into() },
    ];
    assert_eq!(g.generate("q", &cands, &lang("en"), 100).await.unwrap(), "A");
    assert_eq!(g.generate("q", &[], &lang("en"), 100).await.unwrap(), NO_CONTEXT_ANSWER);
    let t = client(Role::Translate, &server, 0);
    assert_eq!(t.translate("hello", &lang("en"), &lang("ja")).await.unwrap(), "⟪ja⟫ hello");
}

#[tokio::test]
async fn request_bodies_use_wire_field_names() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    let g = client(Role::Generate, &server, 0);
    let cands = [WireCandidate { text: "Москва — столица.".into(), lang: "ru".into() }];
    g.generate("Где?", &cands, &lang("ru"), 42).await.unwrap();
    let body: serde_json::Value = serde_json::from_str(&server.log()[0].body).unwrap();
    assert_eq!(
        body,
        serde_json::json!({
            "question": "Где?",
            "candidates": [{"text": "Москва — столица.", "lang": "ru"}],
            "target_lang": "ru",
            "max_new_chars": 42
        })
    );
}

#[tokio::test]
async fn conformance_kit_passes_against_the_reference_mock() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    let targets = ConformanceTargets {
        translate: Some(server.url()),
        score: Some(server.url()),
        generate: Some(server.url()),
    };
    let report = run_conformance(&targets, true).await;
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
    assert!(report.passed(), "{failed:?}");
    assert!(report.checks.len() >= 10);
}

#[tokio::test]
async fn conformance_kit_catches_a_wrong_scorer() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    // every response to /score answers with an off-by-a-bit constant
    for _ in 0..300 {
        server.push_fault(SCORE_ROUTE, Fault::RawBody(r#"{"scores":[0.123]}"#.into()));
    }
    let targets = ConformanceTargets {
        score: Some(server.url()),
        ..Default::default()
    };
    let report = run_conformance(&targets, true).await;
    assert!(!report.passed());
}

#[tokio::test]
async fn scorer_parity_on_shared_pairs() {
    let server = MockServer::start(ReferenceBehavior::default()).await.unwrap();
    let c = client(Role::Score, &server, 0);
    let pairs = parity_fixture_pairs(200);
    assert_eq!(pairs.len(), 200);
    for (q, cand) in &pairs {
        let remote = c.score(q, std::slice::from_ref(cand)).await.unwrap()[0];
        assert!((remote - lexical_score_text(q, cand)).abs() <= PARITY_TOLERANCE);
    }
}
