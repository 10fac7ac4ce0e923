use serde::{Deserialize, Serialize};

use crate::retrieval::RetrievalError;

/// What to do with a question that has no gold title.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MissingGold {
    #[default]
    Exclude,
    Fatal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub n: usize,
    pub hit_rate: f64,
    pub hits: usize,
    pub evaluated: usize,
    pub excluded: usize,
}

/// Fraction of questions whose gold title is among the first `n` retrieved
/// titles. Titles are compared exactly after trimming whitespace.
///
/// `results[i]` and `gold[i]` describe question `i`; `ids` are only used
/// to name a question in the `Fatal` error.
pub fn hit_at_n<S: AsRef<str>>(
    results: &[Vec<S>],
    gold: &[Option<String>],
    ids: &[String],
    n: usize,
    missing: MissingGold,
) -> Result<HitReport, RetrievalError> {
    if n == 0 {
        return Err(RetrievalError::ZeroDepth);
    }
    if results.len() != gold.len() {
        return Err(RetrievalError::LengthMismatch(results.len(), gold.len()));
    }
    let (mut hits, mut evaluated, mut excluded) = (0, 0, 0);
    for (i, (ranked, gold)) in results.iter().zip(gold).enumerate() {
        let Some(gold) = gold.as_deref().map(str::trim).filter(|g| !g.is_empty()) else {
            if missing == MissingGold::Fatal {
                let id = ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(RetrievalError::MissingGold(id));
            }
            excluded += 1;
            continue;
        };
        evaluated += 1;
        if ranked.iter().take(n).any(|t| t.as_ref().trim() == gold) {
            hits += 1;
        }
    }
    if evaluated == 0 {
        return Err(RetrievalError::NothingToEvaluate);
    }
    Ok(HitReport {
        n,
        hit_rate: hits as f64 / evaluated as f64,
        hits,
        evaluated,
        excluded,
    })
}
