//! Cross-lingual retrieval-based generative question answering.
//!
//! The engine translates a question into each configured language, retrieves
//! documents per language with BM25, splits them into candidate sentences,
//! ranks the candidates, aggregates them across languages and asks a
//! generator backend for the final answer. [`evaluation`] holds the metrics
//! used to score the output.

pub mod aggregation;
pub mod as2;
pub mod backends;
pub mod corpus_store;
pub mod evaluation;
pub mod generation;
pub mod lang;
pub mod pipeline;
pub mod retrieval;
pub mod segmentation;

pub use lang::{Lang, LanguageSet};
