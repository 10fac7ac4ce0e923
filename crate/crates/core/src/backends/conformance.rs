//! Wire-protocol conformance checks runnable against any backend server.
//!
//! Protocol checks apply to every implementation. Reference checks pin the
//! deterministic stub behaviors (echo translation, lexical scoring,
//! extractive generation) and scorer parity with [`lexical_score_text`].

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::*;
use crate::as2::lexical_score_text;

/// Multilingual strings every route must carry through unchanged.
pub const UNICODE_FIXTURES: &[(&str, &str)] = &[
    ("ar", "ما هي عاصمة مصر؟"),
    ("bn", "বাংলাদেশের রাজধানী কোথায়?"),
    ("ja", "日本の首都はどこですか？"),
    ("ru", "Какая столица России?"),
    ("en", "Where is the capital of France?"),
];

pub const PARITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConformanceTargets {
    pub translate: Option<String>,
    pub score: Option<String>,
    pub generate: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: impl Into<String>, result: Result<(), String>) {
        let (passed, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Question/candidate pairs shared with other scorer implementations.
/// Deterministic for a given `n`.
pub fn parity_fixture_pairs(n: usize) -> Vec<(String, String)> {
    const WORDS: &[&str] = &[
        "the", "capital", "of", "france", "is", "paris", "river", "mountain", "city", "population",
        "Москва", "столица", "России", "река", "東京", "日本", "首都", "大学", "القاهرة", "مصر",
        "عاصمة", "ঢাকা", "বাংলাদেশ", "রাজধানী", "année", "Straße", "ＡＢＣ", "2024", "war", "peace",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(0..9);
        (0..len)
            .map(|_| *WORDS.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join(if rng.random_bool(0.2) { ", " } else { " " })
    };
    (0..n).map(|_| (sentence(&mut rng), sentence(&mut rng))).collect()
}

async fn post_raw(http: &reqwest::Client, url: &str, body: &str) -> Result<(u16, String), String> {
    let resp = http
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    Ok((status, text))
}

async fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    http: &reqwest::Client,
    url: &str,
    req: &Req,
) -> Result<Resp, String> {
    let body = serde_json::to_string(req).map_err(|e| e.to_string())?;
    let (status, text) = post_raw(http, url, &body).await?;
    if status != 200 {
        return Err(format!("status {status}: {text}"));
    }
    serde_json::from_str(&text).map_err(|e| format!("bad body {text:?}: {e}"))
}

fn url(base: &str, route: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), route)
}

async fn malformed_is_400(http: &reqwest::Client, url: &str) -> Result<(), String> {
    for body in ["{not json", "{}", "[1,2,3]"] {
        let (status, text) = post_raw(http, url, body).await?;
        if status != 400 {
            return Err(format!("body {body:?} gave status {status}: {text}"));
        }
    }
    Ok(())
}

/// Run the protocol checks, plus reference-behavior checks when `reference` is set.
pub async fn run_conformance(targets: &ConformanceTargets, reference: bool) -> ConformanceReport {
    let http = reqwest::Client::new();
    let mut report = ConformanceReport::default();

    if let Some(base) = &targets.translate {
        let u = url(base, TRANSLATE_ROUTE);
        for (lang, text) in UNICODE_FIXTURES {
            let tgt = if *lang == "en" { "ja" } else { "en" };
            let req = TranslateRequest {
                text: text.to_string(),
                source_lang: lang.to_string(),
                target_lang: tgt.to_string(),
            };
            let res = post_json::<_, TranslateResponse>(&http, &u, &req).await.and_then(|r| {
                if r.translation.trim().is_empty() {
                    return Err("empty translation".into());
                }
                let echo = format!("⟪{tgt}⟫ {text}");
                if reference && r.translation != echo {
                    return Err(format!("expected {echo:?}, got {:?}", r.translation));
                }
                Ok(())
            });
            report.record(format!("translate/unicode/{lang}"), res);
        }
        report.record("translate/malformed-400", malformed_is_400(&http, &u).await);
        if reference {
            let req = TranslateRequest {
                text: "hello".into(),
                source_lang: "en".into(),
                target_lang: "ja".into(),
            };
            let res = post_json::<_, TranslateResponse>(&http, &u, &req).await.and_then(|r| {
                (r.translation == "⟪ja⟫ hello")
                    .then_some(())
                    .ok_or(format!("got {:?}", r.translation))
            });
            report.record("translate/reference-echo", res);
        }
    }

    if let Some(base) = &targets.score {
        let u = url(base, SCORE_ROUTE);
        let candidates: Vec<String> = UNICODE_FIXTURES.iter().map(|(_, t)| t.to_string()).collect();
        let req = ScoreRequest {
            question: UNICODE_FIXTURES[0].1.to_string(),
            candidates: candidates.clone(),
        };
        let res = post_json::<_, ScoreResponse>(&http, &u, &req).await.and_then(|r| {
            if r.scores.len() != candidates.len() {
                return Err(format!("{} scores for {} candidates", r.scores.len(), candidates.len()));
            }
            r.scores.iter().all(|s| s.is_finite()).then_some(()).ok_or("non-finite score".into())
        });
        report.record("score/alignment", res);
        report.record("score/malformed-400", malformed_is_400(&http, &u).await);
        if reference {
            let req = ScoreRequest {
                question: "the same words".into(),
                candidates: vec!["the same words".into()],
            };
            let res = post_json::<_, ScoreResponse>(&http, &u, &req).await.and_then(|r| {
                (r.scores == [1.0]).then_some(()).ok_or(format!("got {:?}", r.scores))
            });
            report.record("score/reference-identity", res);

            let pairs = parity_fixture_pairs(200);
            let mut worst = 0.0f64;
            let mut failure = None;
            for (q, c) in &pairs {
                let req = ScoreRequest {
                    question: q.clone(),
                    candidates: vec![c.clone()],
                };
                match post_json::<_, ScoreResponse>(&http, &u, &req).await {
                    Ok(r) if r.scores.len() == 1 => {
                        worst = worst.max((r.scores[0] - lexical_score_text(q, c)).abs());
                    }
                    Ok(r) => failure = Some(format!("{} scores for 1 candidate", r.scores.len())),
                    Err(e) => failure = Some(e),
                }
            }
            let res = match failure {
                Some(e) => Err(e),
                None if worst <= PARITY_TOLERANCE => Ok(()),
                None => Err(format!("max deviation {worst:e}")),
            };
            report.record("score/reference-parity", res);
        }
    }

    if let Some(base) = &targets.generate {
        let u = url(base, GENERATE_ROUTE);
        let cands: Vec<WireCandidate> = UNICODE_FIXTURES
            .iter()
            .map(|(l, t)| WireCandidate {
                text: t.to_string(),
                lang: l.to_string(),
            })
            .collect();
        let req = GenerateRequest {
            question: UNICODE_FIXTURES[2].1.to_string(),
            candidates: cands.clone(),
            target_lang: "ja".into(),
            max_new_chars: 100,
        };
        let res = post_json::<_, GenerateResponse>(&http, &u, &req).await.and_then(|r| {
            if r.answer.trim().is_empty() {
                return Err("empty answer".into());
            }
            if reference && r.answer != cands[0].text {
                return Err(format!("expected first candidate, got {:?}", r.answer));
            }
            Ok(())
        });
        report.record("generate/unicode", res);

        let closed = GenerateRequest {
            candidates: vec![],
            ..req
        };
        let res = post_json::<_, GenerateResponse>(&http, &u, &closed).await.and_then(|r| {
            if r.answer.trim().is_empty() {
                return Err("empty answer".into());
            }
            if reference && r.answer != NO_CONTEXT_ANSWER {
                return Err(format!("expected {NO_CONTEXT_ANSWER}, got {:?}", r.answer));
            }
            Ok(())
        });
        report.record("generate/closed-book", res);
        report.record("generate/malformed-400", malformed_is_400(&http, &u).await);
    }

    report
}
