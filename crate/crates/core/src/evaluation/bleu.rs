use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{metric_tokens, MetricError};
use crate::lang::Lang;

const MAX_ORDER: usize = 4;

/// Floor applied to zero n-gram matches in sentence mode.
pub const SENTENCE_SMOOTHING_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuMode {
    Corpus,
    /// Mean of per-pair sentence BLEU.
    Sentence,
}

#[derive(Default)]
struct Stats {
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn pair_stats(hyp: &[String], reference: &[String], stats: &mut Stats) {
    stats.hyp_len += hyp.len();
    stats.ref_len += reference.len();
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        stats.totals[n - 1] += hyp.len().saturating_sub(n - 1);
        stats.matches[n - 1] += h
            .iter()
            .map(|(gram, &c)| c.min(r.get(gram).copied().unwrap_or(0)))
            .sum::<usize>();
    }
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    }
}

fn score(stats: &Stats, smooth: bool) -> f64 {
    if stats.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        let (m, t) = (stats.matches[n], stats.totals[n]);
        if t == 0 {
            if smooth {
                // effective order: skip n-gram sizes longer than the hypothesis
                continue;
            }
            return 0.0;
        }
        let p = if m > 0 {
            m as f64 / t as f64
        } else if smooth {
            SENTENCE_SMOOTHING_EPSILON / t as f64
        } else {
            return 0.0;
        };
        log_sum += p.ln();
        orders += 1;
    }
    100.0 * brevity_penalty(stats.hyp_len, stats.ref_len) * (log_sum / orders as f64).exp()
}

/// Corpus BLEU with clipped 1..4-gram precisions and brevity penalty, unsmoothed.
pub fn corpus_bleu(hypotheses: &[&str], references: &[&str], lang: &Lang) -> Result<f64, MetricError> {
    check_lengths(hypotheses, references)?;
    let mut stats = Stats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        pair_stats(&metric_tokens(h, lang), &metric_tokens(r, lang), &mut stats);
    }
    Ok(score(&stats, false))
}

/// Smoothed BLEU of a single hypothesis against a single reference.
pub fn sentence_bleu(hypothesis: &str, reference: &str, lang: &Lang) -> f64 {
    let mut stats = Stats::default();
    pair_stats(&metric_tokens(hypothesis, lang), &metric_tokens(reference, lang), &mut stats);
    score(&stats, true)
}

pub fn bleu(hypotheses: &[&str], references: &[&str], lang: &Lang, mode: BleuMode) -> Result<f64, MetricError> {
    match mode {
        BleuMode::Corpus => corpus_bleu(hypotheses, references, lang),
        BleuMode::Sentence => {
            check_lengths(hypotheses, references)?;
            let sum: f64 = hypotheses
                .iter()
                .zip(references)
                .map(|(h, r)| sentence_bleu(h, r, lang))
                .sum();
            Ok(sum / hypotheses.len() as f64)
        }
    }
}

fn check_lengths(h: &[&str], r: &[&str]) -> Result<(), MetricError> {
    if h.len() != r.len() {
        return Err(MetricError::LengthMismatch(h.len(), r.len()));
    }
    if h.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}
