//! Building the multilingual candidate set fed to the generator.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::as2::candidate_order;
use crate::lang::Lang;
use crate::segmentation::Candidate;

pub const DEFAULT_MONO_K: usize = 5;
pub const DEFAULT_CROSS_K: usize = 10;
pub const DEFAULT_PER_LANG: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregationPolicy {
    /// First `k` candidates of the single (question-language) pool.
    MonoTopK { k: usize },
    /// Highest `k` scores across all pools regardless of language.
    CrossTopK { k: usize },
    /// First `per_lang` candidates of every pool.
    CrossTopPerLang { per_lang: usize },
}

impl AggregationPolicy {
    pub fn mono() -> Self {
        AggregationPolicy::MonoTopK { k: DEFAULT_MONO_K }
    }

    pub fn top_k() -> Self {
        AggregationPolicy::CrossTopK { k: DEFAULT_CROSS_K }
    }

    pub fn top_per_lang() -> Self {
        AggregationPolicy::CrossTopPerLang {
            per_lang: DEFAULT_PER_LANG,
        }
    }
}

/// Per-pool score rescaling applied before cross-language comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreNormalization {
    /// Compare raw scores.
    #[default]
    None,
    /// Rescale each pool to [0, 1]; a constant pool maps to 1.
    MinMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilingualCandidateSet {
    pub question_lang: Lang,
    pub candidates: Vec<Candidate>,
    pub policy: AggregationPolicy,
}

impl MultilingualCandidateSet {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregationError {
    #[error("no candidate pools")]
    NoPools,
    #[error("mono aggregation needs exactly one pool, got {0}")]
    MonoNeedsOnePool(usize),
    #[error("policy parameter must be positive")]
    ZeroSize,
    #[error("pool {pool} holds a candidate in {found}")]
    WrongLanguage { pool: Lang, found: Lang },
    #[error("candidate {lang}/{doc_id}/{sent_index} has no score")]
    Unscored { lang: Lang, doc_id: u32, sent_index: usize },
}

/// Global order of M: score descending, then language code, doc id,
/// sentence index.
pub fn set_order(a: &Candidate, b: &Candidate) -> Ordering {
    let sa = a.score.unwrap_or(f64::NEG_INFINITY);
    let sb = b.score.unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa)
        .then_with(|| a.lang.cmp(&b.lang))
        .then(a.doc_id.cmp(&b.doc_id))
        .then(a.sent_index.cmp(&b.sent_index))
}

fn min_max(pool: &mut [Candidate]) {
    let scores = pool.iter().filter_map(|c| c.score);
    let (lo, hi) = scores.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    for c in pool.iter_mut() {
        if let Some(s) = c.score.as_mut() {
            *s = if hi > lo { (*s - lo) / (hi - lo) } else { 1.0 };
        }
    }
}

pub fn aggregate(
    pools: &BTreeMap<Lang, Vec<Candidate>>,
    question_lang: &Lang,
    policy: AggregationPolicy,
) -> Result<MultilingualCandidateSet, AggregationError> {
    aggregate_with(pools, question_lang, policy, ScoreNormalization::None)
}

pub fn aggregate_with(
    pools: &BTreeMap<Lang, Vec<Candidate>>,
    question_lang: &Lang,
    policy: AggregationPolicy,
    normalization: ScoreNormalization,
) -> Result<MultilingualCandidateSet, AggregationError> {
    if pools.is_empty() {
        return Err(AggregationError::NoPools);
    }
    let size = match policy {
        AggregationPolicy::MonoTopK { k } | AggregationPolicy::CrossTopK { k } => k,
        AggregationPolicy::CrossTopPerLang { per_lang } => per_lang,
    };
    if size == 0 {
        return Err(AggregationError::ZeroSize);
    }
    if let AggregationPolicy::MonoTopK { .. } = policy {
        if pools.len() != 1 {
            return Err(AggregationError::MonoNeedsOnePool(pools.len()));
        }
    }

    // validated, sorted copies; BTreeMap iteration makes this independent of insertion order
    let mut sorted: Vec<Vec<Candidate>> = Vec::with_capacity(pools.len());
    for (lang, pool) in pools {
        for c in pool {
            if &c.lang != lang {
                return Err(AggregationError::WrongLanguage {
                    pool: lang.clone(),
                    found: c.lang.clone(),
                });
            }
            if c.score.is_none() {
                return Err(AggregationError::Unscored {
                    lang: c.lang.clone(),
                    doc_id: c.doc_id,
                    sent_index: c.sent_index,
                });
            }
        }
        let mut pool = pool.clone();
        if normalization == ScoreNormalization::MinMax {
            min_max(&mut pool);
        }
        pool.sort_by(candidate_order);
        sorted.push(pool);
    }

    let mut candidates: Vec<Candidate> = match policy {
        AggregationPolicy::MonoTopK { k } => sorted.remove(0).into_iter().take(k).collect(),
        AggregationPolicy::CrossTopK { k } => {
            let mut all: Vec<Candidate> = sorted.into_iter().flatten().collect();
            all.sort_by(set_order);
            all.truncate(k);
            all
        }
        AggregationPolicy::CrossTopPerLang { per_lang } => sorted
            .into_iter()
            .flat_map(|p| p.into_iter().take(per_lang))
            .collect(),
    };
    candidates.sort_by(set_order);
    Ok(MultilingualCandidateSet {
        question_lang: question_lang.clone(),
        candidates,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(c: &str) -> Lang {
        Lang::new(c).unwrap()
    }

    fn pool(code: &str, scores: &[f64]) -> Vec<Candidate> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| Candidate {
                text: format!("{code}{i}"),
                lang: lang(code),
                doc_id: i as u32,
                sent_index: 0,
                score: Some(s),
            })
            .collect()
    }

    fn scores(m: &MultilingualCandidateSet) -> Vec<f64> {
        m.candidates.iter().map(|c| c.score.unwrap()).collect()
    }

    #[test]
    fn top_k_merges_across_languages() {
        let mut pools = BTreeMap::new();
        pools.insert(lang("en"), pool("en", &[0.9, 0.8, 0.7]));
        pools.insert(lang("ja"), pool("ja", &[0.95, 0.1]));
        let m = aggregate(&pools, &lang("en"), AggregationPolicy::CrossTopK { k: 3 }).unwrap();
        assert_eq!(scores(&m), [0.95, 0.9, 0.8]);
    }

    #[test]
    fn per_lang_quota_and_no_padding() {
        let mut pools = BTreeMap::new();
        for code in ["ar", "bn", "en", "ja", "ru"] {
            pools.insert(lang(code), pool(code, &[0.9, 0.5, 0.4]));
        }
        let m = aggregate(&pools, &lang("en"), AggregationPolicy::top_per_lang()).unwrap();
        assert_eq!(m.len(), 10);
        pools.insert(lang("ru"), pool("ru", &[0.3]));
        let m = aggregate(&pools, &lang("en"), AggregationPolicy::top_per_lang()).unwrap();
        assert_eq!(m.len(), 9);
    }

    #[test]
    fn mono_requires_one_pool() {
        let mut pools = BTreeMap::new();
        pools.insert(lang("en"), pool("en", &[0.1, 0.9, 0.5, 0.3, 0.2, 0.8]));
        let m = aggregate(&pools, &lang("en"), AggregationPolicy::mono()).unwrap();
        assert_eq!(scores(&m), [0.9, 0.8, 0.5, 0.3, 0.2]);
        pools.insert(lang("ru"), pool("ru", &[0.5]));
        assert_eq!(
            aggregate(&pools, &lang("en"), AggregationPolicy::mono()).unwrap_err(),
            AggregationError::MonoNeedsOnePool(2)
        );
        assert_eq!(
            aggregate(&BTreeMap::new(), &lang("en"), AggregationPolicy::mono()).unwrap_err(),
            AggregationError::NoPools
        );
    }

    #[test]
    fn ties_order_by_language_then_position() {
        let mut pools = BTreeMap::new();
        pools.insert(lang("ru"), pool("ru", &[0.5]));
        pools.insert(lang("ar"), pool("ar", &[0.5, 0.5]));
        let m = aggregate(&pools, &lang("en"), AggregationPolicy::CrossTopK { k: 10 }).unwrap();
        let keys: Vec<_> = m.candidates.iter().map(|c| (c.lang.as_str(), c.doc_id)).collect();
        assert_eq!(keys, [("ar", 0), ("ar", 1), ("ru", 0)]);
    }

    #[test]
    fn rejects_bad_pools() {
        let mut pools = BTreeMap::new();
        pools.insert(lang("en"), pool("ru", &[0.5]));
        assert!(matches!(
            aggregate(&pools, &lang("en"), AggregationPolicy::top_k()),
            Err(AggregationError::WrongLanguage { .. })
        ));
        let mut unscored = pool("en", &[0.5]);
        unscored[0].score = None;
        pools.insert(lang("en"), unscored);
        assert!(matches!(
            aggregate(&pools, &lang("en"), AggregationPolicy::top_k()),
            Err(AggregationError::Unscored { .. })
        ));
        assert_eq!(
            aggregate(&pools, &lang("en"), AggregationPolicy::CrossTopK { k: 0 }).unwrap_err(),
            AggregationError::ZeroSize
        );
    }

    #[test]
    fn min_max_normalization_changes_cross_ranking() {
        let mut pools = BTreeMap::new();
        pools.insert(lang("en"), pool("en", &[10.0, 5.0, 0.0]));
        pools.insert(lang("ja"), pool("ja", &[0.3, 0.1]));
        let raw = aggregate(&pools, &lang("en"), AggregationPolicy::CrossTopK { k: 2 }).unwrap();
        assert!(raw.candidates.iter().all(|c| c.lang.as_str() == "en"));
        let norm = aggregate_with(&pools, &lang("en"), AggregationPolicy::CrossTopK { k: 2 }, ScoreNormalization::MinMax)
            .unwrap();
        let langs: Vec<_> = norm.candidates.iter().map(|c| c.lang.as_str()).collect();
        assert_eq!(langs, ["en", "ja"]);
        assert_eq!(scores(&norm), [1.0, 1.0]);
    }

    #[test]
    fn policy_serde_names() {
        let p: AggregationPolicy = serde_json::from_str(r#"{"kind":"cross-top-per-lang","per_lang":2}"#).unwrap();
        assert_eq!(p, AggregationPolicy::top_per_lang());
        let p: AggregationPolicy = serde_json::from_str(r#"{"kind":"mono-top-k","k":5}"#).unwrap();
        assert_eq!(p, AggregationPolicy::mono());
    }
}
