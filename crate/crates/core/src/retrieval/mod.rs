//! Per-language BM25 retrieval.

mod hit;
mod index;
mod tokenize;

pub use hit::{hit_at_n, HitReport, MissingGold};
pub use index::{term_weight, Bm25Params, Index, Posting, RetrievalError, ScoredDoc, DEFAULT_TOP_N};
pub use tokenize::{is_cjk, tokenize, Token};
