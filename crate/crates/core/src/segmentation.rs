//! Rule-based, language-aware sentence splitting.
//!
//! Offsets are in characters (Unicode scalar values), not bytes.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus_store::Document;
use crate::lang::Lang;

pub const MAX_SENTENCE_CHARS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub sent_index: usize,
}

/// One candidate answer sentence drawn from a retrieved document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub lang: Lang,
    pub doc_id: u32,
    pub sent_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

const DEFAULT_ABBREVIATIONS: &[(&str, &[&str])] = &[
    ("en", &["mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e"]),
    ("ru", &["г", "ул", "им", "т.е", "т.д", "см", "д"]),
];

fn soft_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Terminal marks that end a sentence even without following whitespace.
fn hard_terminal(c: char, lang: &Lang) -> bool {
    match lang.as_str() {
        "ar" | "fa" | "ur" => matches!(c, '\u{061F}' | '\u{06D4}'),
        "bn" | "hi" => matches!(c, '\u{0964}' | '\u{0965}'),
        "ja" | "zh" => matches!(c, '。' | '？' | '！'),
        _ => false,
    }
}

fn closer(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | ')' | ']' | '}' | '»' | '”' | '’' | '」' | '』' | '）'
    )
}

fn opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '{' | '«' | '“' | '‘' | '「' | '『' | '（')
}

#[derive(Clone, Debug)]
pub struct Segmenter {
    abbreviations: HashMap<String, HashSet<String>>,
    max_chars: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        let abbreviations = DEFAULT_ABBREVIATIONS
            .iter()
            .map(|(lang, list)| (lang.to_string(), list.iter().map(|a| a.to_string()).collect()))
            .collect();
        Segmenter {
            abbreviations,
            max_chars: MAX_SENTENCE_CHARS,
        }
    }
}

impl Segmenter {
    /// Extend the abbreviation lists from `<dir>/<lang>.txt` files, one
    /// abbreviation per line, with or without the trailing period.
    pub fn with_abbreviation_dir(mut self, dir: &Path) -> std::io::Result<Self> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let set = self.abbreviations.entry(lang.to_lowercase()).or_default();
            for line in fs::read_to_string(&path)?.lines() {
                let abbr = line.trim().trim_end_matches('.').to_lowercase();
                if !abbr.is_empty() && !abbr.starts_with('#') {
                    set.insert(abbr);
                }
            }
        }
        Ok(self)
    }

    pub fn with_max_chars(mut self, max_chars: usize) -> Self {
        self.max_chars = max_chars.max(1);
        self
    }

    fn is_abbreviation(&self, chars: &[char], sent_start: usize, dot: usize, lang: &Lang) -> bool {
        let Some(list) = self.abbreviations.get(lang.as_str()) else {
            return false;
        };
        let mut from = dot;
        while from > sent_start && !chars[from - 1].is_whitespace() {
            from -= 1;
        }
        while from < dot && opener(chars[from]) {
            from += 1;
        }
        let word: String = chars[from..dot].iter().collect::<String>().to_lowercase();
        !word.is_empty() && list.contains(&word)
    }

    pub fn split(&self, text: &str, lang: &Lang) -> Vec<Sentence> {
        let cs: Vec<char> = text.chars().collect();
        let n = cs.len();
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        let mut i = 0;

        let close = |out: &mut Vec<Sentence>, s: usize, mut e: usize| {
            while e > s && cs[e - 1].is_whitespace() {
                e -= 1;
            }
            if e > s {
                out.push(Sentence {
                    text: cs[s..e].iter().collect(),
                    start: s,
                    end: e,
                    sent_index: out.len(),
                });
            }
        };

        while i < n {
            let c = cs[i];
            let Some(s) = start else {
                if !c.is_whitespace() {
                    start = Some(i);
                }
                i += 1;
                continue;
            };

            if c == '\n' && paragraph_break(&cs, i) {
                close(&mut out, s, i);
                start = None;
                i += 1;
                continue;
            }

            let hard = hard_terminal(c, lang);
            if hard || soft_terminal(c) {
                let mut j = i + 1;
                while j < n && (soft_terminal(cs[j]) || hard_terminal(cs[j], lang) || closer(cs[j])) {
                    j += 1;
                }
                let mut boundary = hard || j == n || cs[j].is_whitespace();
                if boundary && c == '.' && !hard && self.is_abbreviation(&cs, s, i, lang) {
                    boundary = false;
                }
                if boundary {
                    close(&mut out, s, j);
                    start = None;
                    i = j;
                    continue;
                }
            }

            i += 1;
            if i - s >= self.max_chars {
                // cut at the last whitespace inside the window, else exactly at the limit
                match (s + 1..i).rev().find(|&k| cs[k].is_whitespace()) {
                    Some(k) => {
                        close(&mut out, s, k);
                        i = k;
                    }
                    None => close(&mut out, s, i),
                }
                start = None;
            }
        }
        if let Some(s) = start {
            close(&mut out, s, n);
        }
        out
    }
}

/// A newline followed, after optional horizontal whitespace, by another newline.
fn paragraph_break(cs: &[char], newline: usize) -> bool {
    cs[newline + 1..]
        .iter()
        .take_while(|c| c.is_whitespace())
        .any(|&c| c == '\n')
}

fn default_segmenter() -> &'static Segmenter {
    static SEGMENTER: OnceLock<Segmenter> = OnceLock::new();
    SEGMENTER.get_or_init(Segmenter::default)
}

/// Split `text` with the built-in abbreviation lists.
pub fn split_sentences(text: &str, lang: &Lang) -> Vec<Sentence> {
    default_segmenter().split(text, lang)
}

/// Every sentence of every document body, ordered by (retrieval rank, sentence index).
pub fn extract_candidates(docs: &[(Document, usize)], lang: &Lang) -> Vec<Candidate> {
    extract_candidates_with(default_segmenter(), docs, lang)
}

pub fn extract_candidates_with(
    segmenter: &Segmenter,
    docs: &[(Document, usize)],
    lang: &Lang,
) -> Vec<Candidate> {
    let mut ordered: Vec<&(Document, usize)> = docs.iter().collect();
    ordered.sort_by_key(|(_, rank)| *rank);
    ordered
        .into_iter()
        .flat_map(|(doc, _)| {
            segmenter.split(&doc.body, lang).into_iter().map(move |s| Candidate {
                text: s.text,
                lang: lang.clone(),
                doc_id: doc.doc_id,
                sent_index: s.sent_index,
                score: None,
            })
        })
        .collect()
}
