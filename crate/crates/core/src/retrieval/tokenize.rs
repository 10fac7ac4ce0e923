use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::lang::Lang;

/// A normalized index term. Only [`tokenize`] produces these.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Han, kana and hangul. Runs of these characters are indexed as bigrams.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF     // hiragana, katakana
        | 0x31F0..=0x31FF   // katakana phonetic extensions
        | 0x3400..=0x4DBF   // CJK extension A
        | 0x4E00..=0x9FFF   // CJK unified
        | 0xF900..=0xFAFF   // compatibility ideographs
        | 0xFF66..=0xFF9F   // half-width katakana
        | 0x1100..=0x11FF   // hangul jamo
        | 0x3130..=0x318F
        | 0xAC00..=0xD7AF   // hangul syllables
        | 0x20000..=0x2FA1F)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c) || c == '\u{200C}' || c == '\u{200D}'
}

#[derive(PartialEq)]
enum Run {
    None,
    Word,
    Cjk,
}

/// NFKC-normalize and lowercase, then split into terms.
///
/// Alphanumeric runs (including combining marks, so Bengali and Arabic
/// diacritics stay attached) become one token each. Runs of CJK characters
/// emit overlapping character bigrams, or the single character for a run
/// of length one. Everything else separates tokens.
pub fn tokenize(text: &str, _lang: &Lang) -> Vec<Token> {
    let normalized: String = text.nfkc().flat_map(char::to_lowercase).collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut cjk: Vec<char> = Vec::new();
    let mut run = Run::None;

    for c in normalized.chars() {
        let next = if is_cjk(c) {
            Run::Cjk
        } else if is_word_char(c) {
            // a stray combining mark cannot start a word on its own
            if run == Run::None && is_combining_mark(c) {
                continue;
            }
            Run::Word
        } else {
            Run::None
        };
        if next != run {
            flush(&mut tokens, &mut word, &mut cjk);
        }
        match next {
            Run::Cjk => cjk.push(c),
            Run::Word => word.push(c),
            Run::None => {}
        }
        run = next;
    }
    flush(&mut tokens, &mut word, &mut cjk);
    tokens
}

fn flush(tokens: &mut Vec<Token>, word: &mut String, cjk: &mut Vec<char>) {
    if !word.is_empty() {
        tokens.push(Token(std::mem::take(word)));
    }
    match cjk.len() {
        0 => {}
        1 => tokens.push(Token(cjk[0].to_string())),
        _ => tokens.extend(cjk.windows(2).map(|w| Token(w.iter().collect()))),
    }
    cjk.clear();
}
