//! JSON bodies of the three backend routes. Field names are part of the
//! wire contract.

use serde::{Deserialize, Serialize};

pub const TRANSLATE_ROUTE: &str = "/translate";
pub const SCORE_ROUTE: &str = "/score";
pub const GENERATE_ROUTE: &str = "/generate";

/// Answer of the reference generator when it receives no candidates.
pub const NO_CONTEXT_ANSWER: &str = "NO-CONTEXT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub translation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub question: String,
    pub candidates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub text: String,
    pub lang: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub question: String,
    pub candidates: Vec<WireCandidate>,
    pub target_lang: String,
    pub max_new_chars: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub answer: String,
}
