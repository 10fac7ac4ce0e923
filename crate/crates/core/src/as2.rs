//! Answer sentence selection: labeled dataset construction from span
//! annotations, and candidate ranking with a lexical baseline or a remote
//! scorer.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendClient, WireError};
use crate::corpus_store::{resolve_span, DocStore, Question, SpanOffsets};
use crate::lang::Lang;
use crate::retrieval::tokenize;
use crate::segmentation::{split_sentences, Candidate};

/// Candidates sent per remote scoring request.
const REMOTE_BATCH: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum As2Error {
    #[error("question {0}: empty gold span")]
    EmptySpan(String),
    #[error("question {q_id}: candidate pool mixes languages ({first} and {other})")]
    MixedPool { q_id: String, first: Lang, other: Lang },
    #[error("question {q_id}: remote scorer failed: {source}")]
    Scorer {
        q_id: String,
        #[source]
        source: WireError,
    },
    #[error("remote scorer requires an endpoint")]
    MissingEndpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub q_id: String,
    pub question: String,
    pub candidate: Candidate,
    pub label: bool,
}

/// One line of the dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct As2Record {
    pub q_id: String,
    pub question: String,
    pub candidate_text: String,
    pub lang: Lang,
    pub doc_id: u32,
    pub sent_index: usize,
    pub label: u8,
}

impl From<&LabeledPair> for As2Record {
    fn from(p: &LabeledPair) -> Self {
        As2Record {
            q_id: p.q_id.clone(),
            question: p.question.clone(),
            candidate_text: p.candidate.text.clone(),
            lang: p.candidate.lang.clone(),
            doc_id: p.candidate.doc_id,
            sent_index: p.candidate.sent_index,
            label: p.label as u8,
        }
    }
}

/// Questions left out of the dataset, by reason.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub questions: usize,
    pub emitted_questions: usize,
    pub pairs: usize,
    pub positives: usize,
    pub no_gold_title: Vec<String>,
    pub unresolved_document: Vec<String>,
    pub no_span: Vec<String>,
    pub zero_positive: Vec<String>,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Label every sentence of each question's gold document: sentences that
/// overlap the gold span are positive, the rest negative. Questions that end
/// up without a positive are dropped and listed in the report.
pub fn build_as2_dataset(
    questions: &[Question],
    stores: &HashMap<Lang, DocStore>,
) -> Result<(Vec<LabeledPair>, BuildReport), As2Error> {
    let mut report = BuildReport {
        questions: questions.len(),
        ..Default::default()
    };
    let mut pairs = Vec::new();

    for q in questions {
        let Some(title) = q.gold_doc_title.as_deref() else {
            report.no_gold_title.push(q.q_id.clone());
            continue;
        };
        let Some(span) = q.gold_span.as_ref() else {
            report.no_span.push(q.q_id.clone());
            continue;
        };
        let span_text = q.gold_span_text().unwrap_or_default();
        if span_text.trim().is_empty() {
            return Err(As2Error::EmptySpan(q.q_id.clone()));
        }
        let Some((store, doc_id)) = stores
            .get(&q.lang)
            .and_then(|s| s.find_title(title).map(|id| (s, id)))
        else {
            report.unresolved_document.push(q.q_id.clone());
            continue;
        };
        let doc = store.get(doc_id).expect("id from title lookup");

        // span position inside the document body, when the passage can be located
        let doc_span: Option<SpanOffsets> = span.offsets().and_then(|o| {
            let passage = q.gold_passage.as_deref()?;
            let at = resolve_span(&doc.body, passage)?;
            Some(SpanOffsets {
                start: at.start + o.start,
                end: at.start + o.end,
            })
        });
        let needle = normalize_ws(&span_text);

        let sentences = split_sentences(&doc.body, &q.lang);
        let labels: Vec<bool> = sentences
            .iter()
            .map(|s| match doc_span {
                Some(sp) => s.start < sp.end && sp.start < s.end,
                None => normalize_ws(&s.text).contains(&needle),
            })
            .collect();
        if !labels.contains(&true) {
            report.zero_positive.push(q.q_id.clone());
            continue;
        }

        report.emitted_questions += 1;
        for (s, label) in sentences.into_iter().zip(labels) {
            report.pairs += 1;
            report.positives += label as usize;
            pairs.push(LabeledPair {
                q_id: q.q_id.clone(),
                question: q.text.clone(),
                candidate: Candidate {
                    text: s.text,
                    lang: q.lang.clone(),
                    doc_id,
                    sent_index: s.sent_index,
                    score: None,
                },
                label,
            });
        }
    }
    Ok((pairs, report))
}

fn unique_tokens(text: &str, lang: &Lang) -> BTreeSet<String> {
    tokenize(text, lang).into_iter().map(|t| t.into_string()).collect()
}

/// Share of the question's distinct tokens that also occur in the candidate.
pub fn lexical_score(question: &str, question_lang: &Lang, candidate: &str, candidate_lang: &Lang) -> f64 {
    let q = unique_tokens(question, question_lang);
    if q.is_empty() {
        return 0.0;
    }
    let c = unique_tokens(candidate, candidate_lang);
    q.intersection(&c).count() as f64 / q.len() as f64
}

/// [`lexical_score`] for untagged text; tokenization does not depend on the tag.
pub fn lexical_score_text(question: &str, candidate: &str) -> f64 {
    static ANY: OnceLock<Lang> = OnceLock::new();
    let lang = ANY.get_or_init(|| Lang::new("en").unwrap());
    lexical_score(question, lang, candidate, lang)
}

/// Which scorer ranks candidates, as written in configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerHandle {
    #[default]
    LexicalBaseline,
    Remote { endpoint: String },
}

#[derive(Clone, Debug)]
pub enum Scorer {
    Lexical,
    Remote(Arc<BackendClient>),
}

impl Scorer {
    pub fn name(&self) -> String {
        match self {
            Scorer::Lexical => "lexical-baseline".to_string(),
            Scorer::Remote(c) => c.config().display_name(),
        }
    }
}

/// Candidate order: score descending, then doc id and sentence index ascending.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    let sa = a.score.unwrap_or(f64::NEG_INFINITY);
    let sb = b.score.unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa)
        .then(a.doc_id.cmp(&b.doc_id))
        .then(a.sent_index.cmp(&b.sent_index))
}

/// Attach `scores` (aligned with `pool`) and sort.
pub fn apply_scores(mut pool: Vec<Candidate>, scores: &[f64]) -> Vec<Candidate> {
    debug_assert_eq!(pool.len(), scores.len());
    for (c, &s) in pool.iter_mut().zip(scores) {
        c.score = Some(s);
    }
    pool.sort_by(candidate_order);
    pool
}

/// Score every candidate of a monolingual pool and sort best first.
pub async fn rank_candidates(
    question: &Question,
    pool: Vec<Candidate>,
    scorer: &Scorer,
) -> Result<Vec<Candidate>, As2Error> {
    if let Some(first) = pool.first() {
        if let Some(other) = pool.iter().find(|c| c.lang != first.lang) {
            return Err(As2Error::MixedPool {
                q_id: question.q_id.clone(),
                first: first.lang.clone(),
                other: other.lang.clone(),
            });
        }
    }
    let scores = match scorer {
        Scorer::Lexical => pool
            .iter()
            .map(|c| lexical_score(&question.text, &question.lang, &c.text, &c.lang))
            .collect(),
        Scorer::Remote(client) => {
            let texts: Vec<String> = pool.iter().map(|c| c.text.clone()).collect();
            let batches = texts
                .chunks(REMOTE_BATCH)
                .map(|chunk| client.score(&question.text, chunk));
            let scored = futures::future::try_join_all(batches)
                .await
                .map_err(|source| As2Error::Scorer {
                    q_id: question.q_id.clone(),
                    source,
                })?;
            scored.into_iter().flatten().collect::<Vec<f64>>()
        }
    };
    Ok(apply_scores(pool, &scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_store::{ingest_corpus, GoldSpan, IngestOptions};
    use proptest::prelude::*;
    use std::io::Write;

    fn en() -> Lang {
        Lang::new("en").unwrap()
    }

    fn cand(text: &str, doc_id: u32, sent_index: usize) -> Candidate {
        Candidate {
            text: text.into(),
            lang: en(),
            doc_id,
            sent_index,
            score: None,
        }
    }

    fn question(text: &str) -> Question {
        Question {
            q_id: "q".into(),
            text: text.into(),
            lang: en(),
            gold_doc_title: None,
            gold_passage: None,
            gold_span: None,
            reference_answer: None,
        }
    }

    #[test]
    fn lexical_hand_cases() {
        let l = en();
        assert_eq!(lexical_score("big red dog", &l, "big red dog", &l), 1.0);
        assert_eq!(lexical_score("big red dog", &l, "small cat", &l), 0.0);
        assert_eq!(lexical_score("a b c d", &l, "c x a", &l), 0.5);
        assert_eq!(lexical_score("?!", &l, "anything", &l), 0.0);
    }

    proptest! {
        #[test]
        fn lexical_invariances(q in proptest::collection::vec("[a-e]{1,3}", 1..8), c in proptest::collection::vec("[a-e]{1,3}", 0..8)) {
            let l = en();
            let base = lexical_score(&q.join(" "), &l, &c.join(" "), &l);
            let mut rev = c.clone();
            rev.reverse();
            prop_assert_eq!(base, lexical_score(&q.join(" "), &l, &rev.join(" "), &l));
            let doubled = format!("{} {}", q.join(" "), q.join(" "));
            prop_assert_eq!(base, lexical_score(&doubled, &l, &c.join(" "), &l));
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }

    #[tokio::test]
    async fn lexical_ranking_order_and_ties() {
        let pool = vec![cand("half match", 0, 0), cand("match both", 0, 1), cand("none", 1, 0)];
        let ranked = rank_candidates(&question("match both"), pool, &Scorer::Lexical).await.unwrap();
        let order: Vec<_> = ranked.iter().map(|c| (c.doc_id, c.sent_index)).collect();
        assert_eq!(order, [(0, 1), (0, 0), (1, 0)]);
        assert_eq!(ranked[0].score, Some(1.0));

        let pool = vec![cand("x", 2, 1), cand("x", 2, 0), cand("x", 1, 5)];
        let ranked = rank_candidates(&question("y"), pool, &Scorer::Lexical).await.unwrap();
        let order: Vec<_> = ranked.iter().map(|c| (c.doc_id, c.sent_index)).collect();
        assert_eq!(order, [(1, 5), (2, 0), (2, 1)]);
    }

    #[tokio::test]
    async fn mixed_pool_rejected() {
        let mut other = cand("x", 0, 1);
        other.lang = Lang::new("ru").unwrap();
        let err = rank_candidates(&question("x"), vec![cand("x", 0, 0), other], &Scorer::Lexical)
            .await
            .unwrap_err();
        assert!(matches!(err, As2Error::MixedPool { .. }));
    }

    #[test]
    fn scorer_handle_serde() {
        let h: ScorerHandle = toml::from_str("kind = \"remote\"\nendpoint = \"http://x\"").unwrap();
        assert_eq!(h, ScorerHandle::Remote { endpoint: "http://x".into() });
        assert!(toml::from_str::<ScorerHandle>("kind = \"remote\"").is_err());
        let h: ScorerHandle = toml::from_str("kind = \"lexical-baseline\"").unwrap();
        assert_eq!(h, ScorerHandle::LexicalBaseline);
    }

    fn store_with(docs: &[(&str, &str)]) -> (tempfile::TempDir, HashMap<Lang, DocStore>) {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("c.jsonl");
        let mut f = std::fs::File::create(&input).unwrap();
        for (t, b) in docs {
            writeln!(f, "{}", serde_json::json!({"title": t, "text": b})).unwrap();
        }
        ingest_corpus(&input, &en(), tmp.path(), &IngestOptions::default()).unwrap();
        let mut map = HashMap::new();
        map.insert(en(), DocStore::open(tmp.path(), &en()).unwrap());
        (tmp, map)
    }

    const BODY: &str = "Paris is old. It is the capital of France. The Seine runs through it. Many tourists visit.";

    fn gold_q(id: &str, span: GoldSpan, passage: Option<&str>) -> Question {
        Question {
            q_id: id.into(),
            text: "What is the capital of France?".into(),
            lang: en(),
            gold_doc_title: Some("Paris".into()),
            gold_passage: passage.map(str::to_string),
            gold_span: Some(span),
            reference_answer: None,
        }
    }

    #[test]
    fn span_inside_one_sentence() {
        let (_tmp, stores) = store_with(&[("Paris", BODY)]);
        let span = GoldSpan::Offsets(resolve_span(BODY, "capital of France").unwrap());
        let (pairs, report) = build_as2_dataset(&[gold_q("q1", span, Some(BODY))], &stores).unwrap();
        let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, [false, true, false, false]);
        assert_eq!((report.pairs, report.positives, report.emitted_questions), (4, 1, 1));
    }

    #[test]
    fn span_crossing_boundary_marks_both() {
        let (_tmp, stores) = store_with(&[("Paris", BODY)]);
        // passage is a suffix of the body, so offsets must be shifted
        let passage = &BODY[14..];
        let span = GoldSpan::Offsets(resolve_span(passage, "France. The Seine").unwrap());
        let (pairs, _) = build_as2_dataset(&[gold_q("q1", span, Some(passage))], &stores).unwrap();
        let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, [false, true, true, false]);
    }

    #[test]
    fn raw_text_span_uses_containment() {
        let (_tmp, stores) = store_with(&[("Paris", BODY)]);
        let span = GoldSpan::Text { text: "Seine  runs".into(), resolved: None };
        let (pairs, _) = build_as2_dataset(&[gold_q("q1", span, None)], &stores).unwrap();
        let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, [false, false, true, false]);
    }

    #[test]
    fn drops_are_reported_not_emitted() {
        let (_tmp, stores) = store_with(&[("Paris", BODY)]);
        let absent = GoldSpan::Text { text: "Berlin".into(), resolved: None };
        let mut no_doc = gold_q("q2", GoldSpan::Text { text: "x".into(), resolved: None }, None);
        no_doc.gold_doc_title = Some("Lyon".into());
        let mut no_title = no_doc.clone();
        no_title.q_id = "q3".into();
        no_title.gold_doc_title = None;
        let mut no_span = gold_q("q4", absent.clone(), None);
        no_span.gold_span = None;
        let qs = [gold_q("q1", absent, None), no_doc, no_title, no_span];
        let (pairs, report) = build_as2_dataset(&qs, &stores).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(report.zero_positive, ["q1"]);
        assert_eq!(report.unresolved_document, ["q2"]);
        assert_eq!(report.no_gold_title, ["q3"]);
        assert_eq!(report.no_span, ["q4"]);
    }

    #[test]
    fn empty_span_is_an_error() {
        let (_tmp, stores) = store_with(&[("Paris", BODY)]);
        let span = GoldSpan::Text { text: "  ".into(), resolved: None };
        assert!(matches!(
            build_as2_dataset(&[gold_q("q9", span, None)], &stores),
            Err(As2Error::EmptySpan(id)) if id == "q9"
        ));
    }
}
