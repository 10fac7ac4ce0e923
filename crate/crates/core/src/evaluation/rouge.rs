use serde::{Deserialize, Serialize};

use super::metric_tokens;
use crate::lang::Lang;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L with F as the plain harmonic mean of precision and recall.
pub fn rouge_l(hypothesis: &str, reference: &str, lang: &Lang) -> RougeScore {
    rouge_l_beta(hypothesis, reference, lang, 1.0)
}

/// ROUGE-L with `F = (1 + β²)PR / (R + β²P)`.
pub fn rouge_l_beta(hypothesis: &str, reference: &str, lang: &Lang, beta: f64) -> RougeScore {
    let h = metric_tokens(hypothesis, lang);
    let r = metric_tokens(reference, lang);
    if h.is_empty() || r.is_empty() {
        return RougeScore {
            precision: 0.0,
            recall: 0.0,
            f: 0.0,
        };
    }
    let lcs = lcs_len(&h, &r) as f64;
    let precision = lcs / h.len() as f64;
    let recall = lcs / r.len() as f64;
    let b2 = beta * beta;
    let f = if lcs == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / (recall + b2 * precision)
    };
    RougeScore { precision, recall, f }
}
