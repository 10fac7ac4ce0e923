//! Answer-quality metrics: vote accuracy, Fleiss' kappa, BLEU, ROUGE-L and
//! Spearman correlation. All functions are pure.

mod agreement;
mod bleu;
mod rouge;
mod spearman;

use serde::{Deserialize, Serialize};

use crate::lang::Lang;
use crate::retrieval::is_cjk;
use unicode_normalization::UnicodeNormalization;

pub use agreement::{fleiss_kappa, vote_accuracy, VoteRecord};
pub use bleu::{bleu, corpus_bleu, sentence_bleu, BleuMode, SENTENCE_SMOOTHING_EPSILON};
pub use rouge::{rouge_l, rouge_l_beta, RougeScore};
pub use spearman::{average_ranks, spearman};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("no records to evaluate")]
    Empty,
    #[error("item {0} has no votes")]
    NoVotes(String),
    #[error("Fleiss' kappa needs the same number of raters per item: {first} vs {other} (item {item})")]
    UnequalRaters { first: usize, other: usize, item: String },
    #[error("Fleiss' kappa needs at least {0}")]
    TooFew(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("Spearman correlation is undefined for a constant series")]
    Constant,
    #[error("non-finite value in input")]
    NonFinite,
}

/// Summary numbers for one system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge_l_f: Option<f64>,
}

/// Tokens for text-overlap metrics: NFKC + lowercase, then characters for
/// Japanese (and any CJK character elsewhere), whitespace words otherwise.
pub fn metric_tokens(text: &str, lang: &Lang) -> Vec<String> {
    let norm: String = text.nfkc().flat_map(char::to_lowercase).collect();
    if lang.is_unsegmented() {
        return norm
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect();
    }
    let mut out = Vec::new();
    for word in norm.split_whitespace() {
        if word.chars().any(is_cjk) {
            out.extend(word.chars().map(String::from));
        } else {
            out.push(word.to_string());
        }
    }
    out
}
