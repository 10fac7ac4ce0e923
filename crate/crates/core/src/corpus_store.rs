//! On-disk document store and question loader.
//!
//! Each language lives in its own directory under the store root:
//!
//! ```text
//! <root>/<lang>/docs.bin   magic "CQADOCS\0", u32 version, then records
//!                          (u32 title_len, title, u32 body_len, body)
//! <root>/<lang>/docs.idx   magic "CQAOFFS\0", u32 version, u64 n_docs,
//!                          u64 n_tokens, then n_docs u64 record offsets
//! ```
//!
//! All integers are little-endian. Doc ids are dense and follow input order.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lang::{Lang, LanguageSet};
use crate::retrieval::tokenize;

const DOCS_MAGIC: &[u8; 8] = b"CQADOCS\0";
const OFFS_MAGIC: &[u8; 8] = b"CQAOFFS\0";
const STORE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("language {0} is not in the configured language set")]
    UnknownLanguage(Lang),
    #[error("no store for language {lang} under {root}")]
    NoStore { lang: Lang, root: PathBuf },
    #[error("document {doc_id} not found in {lang} store")]
    UnknownDocument { lang: Lang, doc_id: u32 },
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("question {q_id}: invalid gold span offsets {start}..{end} (passage length {len})")]
    BadOffsets {
        q_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u32,
    pub title: String,
    pub body: String,
    pub lang: Lang,
}

impl Document {
    /// Text indexed for retrieval: title followed by body.
    pub fn indexed_text(&self) -> String {
        indexed_text(&self.title, &self.body)
    }
}

pub(crate) fn indexed_text(title: &str, body: &str) -> String {
    let mut s = String::with_capacity(title.len() + body.len() + 1);
    s.push_str(title);
    s.push('\n');
    s.push_str(body);
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub lang: Lang,
    pub n_docs: u64,
    pub n_tokens: u64,
    pub avg_doc_len: f64,
}

impl CorpusStats {
    fn new(lang: Lang, n_docs: u64, n_tokens: u64) -> Self {
        let avg_doc_len = if n_docs > 0 {
            n_tokens as f64 / n_docs as f64
        } else {
            0.0
        };
        CorpusStats {
            lang,
            n_docs,
            n_tokens,
            avg_doc_len,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    /// Skip malformed lines instead of failing the whole ingest.
    pub skip_errors: bool,
    pub languages: LanguageSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub stats: CorpusStats,
    pub skipped_empty_title: usize,
    /// Malformed lines that were skipped, as `path:line: message`.
    pub skipped_malformed: Vec<String>,
}

#[derive(Deserialize)]
struct CorpusRecord {
    title: String,
    text: String,
}

/// Input files for a corpus path: the file itself, or every regular file
/// below a directory in path order.
fn input_files(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let meta = fs::metadata(path).map_err(io_err(path))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Ingest a JSON-lines corpus for `lang`, replacing any existing store for
/// that language under `store_root`.
pub fn ingest_corpus(
    input: &Path,
    lang: &Lang,
    store_root: &Path,
    opts: &IngestOptions,
) -> Result<IngestReport, CorpusError> {
    if !opts.languages.contains(lang) {
        return Err(CorpusError::UnknownLanguage(lang.clone()));
    }
    let mut writer = StoreWriter::default();
    let mut skipped_empty_title = 0;
    let mut skipped_malformed = Vec::new();

    for file in input_files(input)? {
        let reader = BufReader::new(fs::File::open(&file).map_err(io_err(&file))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err(&file))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    let err = CorpusError::Malformed {
                        path: file.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    };
                    if opts.skip_errors {
                        tracing::warn!("{err}");
                        skipped_malformed.push(err.to_string());
                        continue;
                    }
                    return Err(err);
                }
            };
            if record.title.trim().is_empty() {
                skipped_empty_title += 1;
                continue;
            }
            let n_tokens = tokenize(&indexed_text(&record.title, &record.text), lang).len();
            writer.push(&record.title, &record.text, n_tokens as u64);
        }
    }

    let stats = writer.finish(&store_root.join(lang.as_str()), lang)?;
    Ok(IngestReport {
        stats,
        skipped_empty_title,
        skipped_malformed,
    })
}

#[derive(Default)]
struct StoreWriter {
    data: Vec<u8>,
    offsets: Vec<u64>,
    n_tokens: u64,
}

impl StoreWriter {
    fn push(&mut self, title: &str, body: &str, n_tokens: u64) {
        if self.data.is_empty() {
            self.data.extend_from_slice(DOCS_MAGIC);
            self.data.extend_from_slice(&STORE_VERSION.to_le_bytes());
        }
        self.offsets.push(self.data.len() as u64);
        for field in [title, body] {
            self.data
                .extend_from_slice(&(field.len() as u32).to_le_bytes());
            self.data.extend_from_slice(field.as_bytes());
        }
        self.n_tokens += n_tokens;
    }

    fn finish(mut self, dir: &Path, lang: &Lang) -> Result<CorpusStats, CorpusError> {
        if self.data.is_empty() {
            self.data.extend_from_slice(DOCS_MAGIC);
            self.data.extend_from_slice(&STORE_VERSION.to_le_bytes());
        }
        let mut idx = Vec::with_capacity(28 + 8 * self.offsets.len());
        idx.extend_from_slice(OFFS_MAGIC);
        idx.extend_from_slice(&STORE_VERSION.to_le_bytes());
        idx.extend_from_slice(&(self.offsets.len() as u64).to_le_bytes());
        idx.extend_from_slice(&self.n_tokens.to_le_bytes());
        for off in &self.offsets {
            idx.extend_from_slice(&off.to_le_bytes());
        }

        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_atomic(&dir.join("docs.bin"), &self.data)?;
        write_atomic(&dir.join("docs.idx"), &idx)?;
        Ok(CorpusStats::new(
            lang.clone(),
            self.offsets.len() as u64,
            self.n_tokens,
        ))
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// A read-only, fully loaded language store.
#[derive(Debug)]
pub struct DocStore {
    lang: Lang,
    data: Vec<u8>,
    offsets: Vec<u64>,
    n_tokens: u64,
    by_title: HashMap<String, u32>,
}

impl DocStore {
    pub fn open(store_root: &Path, lang: &Lang) -> Result<Self, CorpusError> {
        let dir = store_root.join(lang.as_str());
        let bin_path = dir.join("docs.bin");
        let idx_path = dir.join("docs.idx");
        if !bin_path.exists() || !idx_path.exists() {
            return Err(CorpusError::NoStore {
                lang: lang.clone(),
                root: store_root.to_path_buf(),
            });
        }
        let data = fs::read(&bin_path).map_err(io_err(&bin_path))?;
        let idx = fs::read(&idx_path).map_err(io_err(&idx_path))?;
        let corrupt = |path: &Path, message: &str| CorpusError::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        };

        if data.len() < 12 || &data[..8] != DOCS_MAGIC {
            return Err(corrupt(&bin_path, "bad magic"));
        }
        if idx.len() < 28 || &idx[..8] != OFFS_MAGIC {
            return Err(corrupt(&idx_path, "bad magic"));
        }
        for (path, version) in [(&bin_path, &data[8..12]), (&idx_path, &idx[8..12])] {
            if u32::from_le_bytes(version.try_into().unwrap()) != STORE_VERSION {
                return Err(corrupt(path, "unsupported version"));
            }
        }
        let n_docs = u64::from_le_bytes(idx[12..20].try_into().unwrap()) as usize;
        let n_tokens = u64::from_le_bytes(idx[20..28].try_into().unwrap());
        if idx.len() != 28 + 8 * n_docs {
            return Err(corrupt(&idx_path, "offset table length mismatch"));
        }
        let offsets: Vec<u64> = idx[28..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let mut store = DocStore {
            lang: lang.clone(),
            data,
            offsets,
            n_tokens,
            by_title: HashMap::new(),
        };
        for doc_id in 0..store.len() as u32 {
            let (title, _) = store
                .decode(doc_id)
                .ok_or_else(|| corrupt(&bin_path, "record out of bounds"))?;
            store.by_title.entry(title.to_string()).or_insert(doc_id);
        }
        Ok(store)
    }

    fn decode(&self, doc_id: u32) -> Option<(&str, &str)> {
        let mut pos = *self.offsets.get(doc_id as usize)? as usize;
        let mut field = || -> Option<&str> {
            let len = u32::from_le_bytes(self.data.get(pos..pos + 4)?.try_into().ok()?) as usize;
            let bytes = self.data.get(pos + 4..pos + 4 + len)?;
            pos += 4 + len;
            std::str::from_utf8(bytes).ok()
        };
        let title = field()?;
        let body = field()?;
        Some((title, body))
    }

    pub fn lang(&self) -> &Lang {
        &self.lang
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats::new(self.lang.clone(), self.len() as u64, self.n_tokens)
    }

    pub fn get(&self, doc_id: u32) -> Result<Document, CorpusError> {
        let (title, body) = self
            .decode(doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument {
                lang: self.lang.clone(),
                doc_id,
            })?;
        Ok(Document {
            doc_id,
            title: title.to_string(),
            body: body.to_string(),
            lang: self.lang.clone(),
        })
    }

    /// First document whose title matches exactly.
    pub fn find_title(&self, title: &str) -> Option<u32> {
        self.by_title.get(title).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = Document> + '_ {
        (0..self.len() as u32).map(move |id| self.get(id).expect("offsets validated on open"))
    }
}

/// Look up one document, opening the language store under `store_root`.
pub fn get_document(store_root: &Path, lang: &Lang, doc_id: u32) -> Result<Document, CorpusError> {
    DocStore::open(store_root, lang)?.get(doc_id)
}

/// Character offsets into the gold passage, `start < end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanOffsets {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldSpan {
    Offsets(SpanOffsets),
    /// Raw span text. `resolved` holds the offsets of its first exact match
    /// in the gold passage; `None` flags an unresolvable span.
    Text {
        text: String,
        resolved: Option<SpanOffsets>,
    },
}

impl GoldSpan {
    pub fn offsets(&self) -> Option<SpanOffsets> {
        match self {
            GoldSpan::Offsets(o) => Some(*o),
            GoldSpan::Text { resolved, .. } => *resolved,
        }
    }

    pub fn is_unresolved(&self) -> bool {
        self.offsets().is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub q_id: String,
    pub text: String,
    pub lang: Lang,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_doc_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_passage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_span: Option<GoldSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

impl Question {
    /// The text of the gold span, from the passage when offsets are known.
    pub fn gold_span_text(&self) -> Option<String> {
        match self.gold_span.as_ref()? {
            GoldSpan::Text { text, .. } => Some(text.clone()),
            GoldSpan::Offsets(o) => {
                let passage = self.gold_passage.as_ref()?;
                Some(passage.chars().skip(o.start).take(o.end - o.start).collect())
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawSpan {
    Offsets { start: usize, end: usize },
    Text(String),
}

/// The question file's line format.
#[derive(Serialize, Deserialize)]
struct RawQuestion {
    q_id: String,
    text: String,
    lang: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_doc_title: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_passage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_span: Option<RawSpan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_answer: Option<String>,
}

impl From<&Question> for RawQuestion {
    fn from(q: &Question) -> Self {
        RawQuestion {
            q_id: q.q_id.clone(),
            text: q.text.clone(),
            lang: q.lang.as_str().to_string(),
            gold_doc_title: q.gold_doc_title.clone(),
            gold_passage: q.gold_passage.clone(),
            gold_span: q.gold_span.as_ref().map(|s| match s {
                GoldSpan::Offsets(o) => RawSpan::Offsets {
                    start: o.start,
                    end: o.end,
                },
                GoldSpan::Text { text, .. } => RawSpan::Text(text.clone()),
            }),
            reference_answer: q.reference_answer.clone(),
        }
    }
}

/// Write questions in the format `load_questions` reads; raw-text spans are
/// written as text, so a reload resolves them the same way.
pub fn save_questions(path: &Path, questions: &[Question]) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for q in questions {
        serde_json::to_writer(&mut out, &RawQuestion::from(q)).expect("question serializes");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Load a JSON-lines question file in file order.
pub fn load_questions(path: &Path, languages: &LanguageSet) -> Result<Vec<Question>, CorpusError> {
    let reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: RawQuestion = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        out.push(validate_question(raw, languages).map_err(|e| match e {
            QuestionIssue::Malformed(m) => malformed(m),
            QuestionIssue::Corpus(e) => e,
        })?);
    }
    Ok(out)
}

enum QuestionIssue {
    Malformed(String),
    Corpus(CorpusError),
}

fn validate_question(raw: RawQuestion, languages: &LanguageSet) -> Result<Question, QuestionIssue> {
    if raw.text.trim().is_empty() {
        return Err(QuestionIssue::Malformed(format!("question {} has empty text", raw.q_id)));
    }
    let lang = Lang::new(&raw.lang).map_err(|e| QuestionIssue::Malformed(e.to_string()))?;
    if !languages.contains(&lang) {
        return Err(QuestionIssue::Corpus(CorpusError::UnknownLanguage(lang)));
    }
    let gold_span = match raw.gold_span {
        None => None,
        Some(RawSpan::Offsets { start, end }) => {
            let len = raw.gold_passage.as_ref().map_or(0, |p| p.chars().count());
            if start >= end || end > len {
                return Err(QuestionIssue::Corpus(CorpusError::BadOffsets {
                    q_id: raw.q_id,
                    start,
                    end,
                    len,
                }));
            }
            Some(GoldSpan::Offsets(SpanOffsets { start, end }))
        }
        Some(RawSpan::Text(text)) => {
            let resolved = raw
                .gold_passage
                .as_deref()
                .and_then(|p| resolve_span(p, &text));
            if resolved.is_none() {
                tracing::debug!("question {}: gold span text not found in passage", raw.q_id);
            }
            Some(GoldSpan::Text { text, resolved })
        }
    };
    Ok(Question {
        q_id: raw.q_id,
        text: raw.text,
        lang,
        gold_doc_title: raw.gold_doc_title,
        gold_passage: raw.gold_passage,
        gold_span,
        reference_answer: raw.reference_answer,
    })
}

/// Character offsets of the first exact occurrence of `needle` in `haystack`.
pub fn resolve_span(haystack: &str, needle: &str) -> Option<SpanOffsets> {
    if needle.is_empty() {
        return None;
    }
    let byte = haystack.find(needle)?;
    let start = haystack[..byte].chars().count();
    Some(SpanOffsets {
        start,
        end: start + needle.chars().count(),
    })
}
