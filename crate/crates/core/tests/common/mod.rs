#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crossqa::aggregation::AggregationPolicy;
use crossqa::backends::mock::{MockServer, ReferenceBehavior};
use crossqa::corpus_store::{ingest_corpus, load_questions, DocStore, IngestOptions, Question};
use crossqa::pipeline::{BackendSpec, Engine, PipelineConfig, Setting};
use crossqa::retrieval::{Bm25Params, Index};
use crossqa::{Lang, LanguageSet};
use serde::Deserialize;

pub const LANGS: [&str; 5] = ["ar", "bn", "en", "ja", "ru"];

pub fn lang(code: &str) -> Lang {
    Lang::new(code).unwrap()
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Ingest every bundled corpus and write its index under `root`.
pub fn build_store(root: &Path) {
    for code in LANGS {
        let l = lang(code);
        let input = fixtures().join("corpus").join(format!("{code}.jsonl"));
        ingest_corpus(&input, &l, root, &IngestOptions::default()).unwrap();
        let store = DocStore::open(root, &l).unwrap();
        Index::build(&store, Bm25Params::default())
            .unwrap()
            .save(&root.join(format!("{code}.bm25")))
            .unwrap();
    }
}

pub fn questions() -> Vec<Question> {
    load_questions(&fixtures().join("questions.jsonl"), &LanguageSet::default()).unwrap()
}

pub fn reference_behavior() -> ReferenceBehavior {
    ReferenceBehavior::from_map_file(&fixtures().join("translate_map.json")).unwrap()
}

pub async fn reference_backend() -> MockServer {
    MockServer::start(reference_behavior()).await.unwrap()
}

/// Config pointing every backend role at `url`, without retry delays.
pub fn config(store: &Path, url: &str, setting: Setting) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(store);
    cfg.setting = setting;
    cfg.policy = match setting {
        Setting::Mono => AggregationPolicy::mono(),
        Setting::Cross => AggregationPolicy::top_per_lang(),
    };
    let spec = |name: &str| BackendSpec {
        endpoint: url.to_string(),
        name: Some(name.to_string()),
        max_retries: Some(0),
        backoff_base_ms: Some(1),
        timeout_ms: Some(5_000),
        ..Default::default()
    };
    cfg.backends.translate = spec("reference-translate");
    cfg.backends.generate = spec("reference-generate");
    cfg
}

pub fn engine(cfg: PipelineConfig) -> Arc<Engine> {
    Arc::new(Engine::load(cfg).unwrap())
}

#[derive(Deserialize)]
pub struct Expected {
    pub mono: String,
    pub mono_score: f64,
    pub cross: String,
    pub cross_lang: String,
    pub cross_m_size: usize,
}

pub fn expected_answers() -> HashMap<String, Expected> {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected_answers.json")).unwrap()).unwrap()
}

#[derive(Deserialize)]
pub struct OracleRanking {
    pub lang: String,
    pub query: String,
    pub ranking: Vec<(u32, f64)>,
}

pub fn bm25_oracle() -> Vec<OracleRanking> {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("bm25_oracle.json")).unwrap()).unwrap()
}

pub fn relative_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
