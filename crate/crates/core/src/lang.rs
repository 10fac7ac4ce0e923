use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An ISO 639-1 language code, stored lowercase.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lang(String);

#[derive(Debug, thiserror::Error)]
#[error("invalid language code {0:?}: expected two ASCII letters")]
pub struct InvalidLang(pub String);

impl Lang {
    pub fn new(code: &str) -> Result<Self, InvalidLang> {
        let code = code.trim();
        if code.len() == 2 && code.bytes().all(|b| b.is_ascii_alphabetic()) {
            Ok(Lang(code.to_ascii_lowercase()))
        } else {
            Err(InvalidLang(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Scripts written without spaces between words.
    pub fn is_unsegmented(&self) -> bool {
        matches!(self.0.as_str(), "ja" | "zh" | "th")
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Lang {
    type Err = InvalidLang;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Lang::new(s)
    }
}

impl Serialize for Lang {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Lang {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Lang::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// The set of languages an engine instance accepts, in configured order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageSet(Vec<Lang>);

impl LanguageSet {
    pub fn new(langs: impl IntoIterator<Item = Lang>) -> Self {
        let mut out: Vec<Lang> = Vec::new();
        for lang in langs {
            if !out.contains(&lang) {
                out.push(lang);
            }
        }
        LanguageSet(out)
    }

    pub fn contains(&self, lang: &Lang) -> bool {
        self.0.contains(lang)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Lang> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LanguageSet {
    /// Arabic, Bengali, English, Japanese, Russian.
    fn default() -> Self {
        LanguageSet::new(
            ["ar", "bn", "en", "ja", "ru"]
                .iter()
                .map(|c| Lang::new(c).expect("static code")),
        )
    }
}
