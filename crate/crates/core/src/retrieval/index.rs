use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_store::{self, DocStore};
use crate::lang::Lang;
use crate::retrieval::tokenize::{tokenize, Token};

const INDEX_MAGIC: &[u8; 8] = b"CQABM25\0";
const INDEX_VERSION: u32 = 1;

/// Default number of documents returned per query.
pub const DEFAULT_TOP_N: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("nothing to index: the {0} store is empty")]
    EmptyStore(Lang),
    #[error("document {0} is not in the index")]
    UnknownDocument(u32),
    #[error("search depth must be positive")]
    ZeroDepth,
    #[error("invalid BM25 parameters: k1={k1}, b={b}")]
    BadParams { k1: f64, b: f64 },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("question {0} has no gold document title")]
    MissingGold(String),
    #[error("no question with a gold title to evaluate")]
    NothingToEvaluate,
    #[error("{0} result lists but {1} gold titles")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Corpus(#[from] corpus_store::CorpusError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RetrievalError> {
        if k1 > 0.0 && k1.is_finite() && (0.0..=1.0).contains(&b) {
            Ok(Bm25Params { k1, b })
        } else {
            Err(RetrievalError::BadParams { k1, b })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: u32,
    pub tf: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: u32,
    pub title: String,
    pub score: f64,
}

/// An immutable per-language inverted index.
#[derive(Clone, Debug, PartialEq)]
pub struct Index {
    lang: Lang,
    params: Bm25Params,
    titles: Vec<String>,
    doc_lens: Vec<u32>,
    avgdl: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

/// Okapi BM25 weight of one query-term instance in one document.
pub fn term_weight(params: Bm25Params, tf: u32, df: usize, n_docs: usize, doc_len: u32, avgdl: f64) -> f64 {
    if tf == 0 {
        return 0.0;
    }
    let n = n_docs as f64;
    let df = df as f64;
    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
    let len_ratio = if avgdl > 0.0 { doc_len as f64 / avgdl } else { 1.0 };
    let tf = tf as f64;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * len_ratio))
}

impl Index {
    /// Index title and body of every document in `store`.
    pub fn build(store: &DocStore, params: Bm25Params) -> Result<Self, RetrievalError> {
        if store.is_empty() {
            return Err(RetrievalError::EmptyStore(store.lang().clone()));
        }
        let lang = store.lang().clone();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut titles = Vec::with_capacity(store.len());
        let mut doc_lens = Vec::with_capacity(store.len());

        for doc in store.iter() {
            let tokens = tokenize(&doc.indexed_text(), &lang);
            doc_lens.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t.into_string()).or_default() += 1;
            }
            // doc ids arrive ascending, so each postings list stays sorted
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc_id: doc.doc_id,
                    tf: count,
                });
            }
            titles.push(doc.title);
        }
        Ok(Self::assemble(lang, params, titles, doc_lens, postings))
    }

    fn assemble(
        lang: Lang,
        params: Bm25Params,
        titles: Vec<String>,
        doc_lens: Vec<u32>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Self {
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let avgdl = if doc_lens.is_empty() {
            0.0
        } else {
            total as f64 / doc_lens.len() as f64
        };
        Index {
            lang,
            params,
            titles,
            doc_lens,
            avgdl,
            postings,
        }
    }

    pub fn lang(&self) -> &Lang {
        &self.lang
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, doc_id: u32) -> Option<u32> {
        self.doc_lens.get(doc_id as usize).copied()
    }

    pub fn title(&self, doc_id: u32) -> Option<&str> {
        self.titles.get(doc_id as usize).map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn term_frequency(&self, term: &str, doc_id: u32) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&doc_id, |p| p.doc_id)
            .map_or(0, |i| list[i].tf)
    }

    /// BM25 score of `doc_id` for a query. Every query-term instance
    /// contributes, so a repeated term counts once per occurrence.
    pub fn bm25_score(&self, query_terms: &[Token], doc_id: u32) -> Result<f64, RetrievalError> {
        let doc_len = self
            .doc_len(doc_id)
            .ok_or(RetrievalError::UnknownDocument(doc_id))?;
        Ok(query_terms
            .iter()
            .map(|t| {
                let tf = self.term_frequency(t.as_str(), doc_id);
                let df = self.postings(t.as_str()).len();
                term_weight(self.params, tf, df, self.n_docs(), doc_len, self.avgdl)
            })
            .sum())
    }

    /// Top `n` documents for `query`, best first, ties by ascending doc id.
    /// Only documents sharing at least one term with the query are returned.
    pub fn search(&self, query: &str, n: usize) -> Result<Vec<ScoredDoc>, RetrievalError> {
        if n == 0 {
            return Err(RetrievalError::ZeroDepth);
        }
        let mut query_tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokenize(query, &self.lang) {
            *query_tf.entry(t.into_string()).or_default() += 1;
        }

        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched = vec![false; self.n_docs()];
        for (term, qtf) in &query_tf {
            let list = self.postings(term);
            for p in list {
                let d = p.doc_id as usize;
                let w = term_weight(self.params, p.tf, list.len(), self.n_docs(), self.doc_lens[d], self.avgdl);
                acc[d] += w * *qtf as f64;
                touched[d] = true;
            }
        }

        let mut hits: Vec<ScoredDoc> = touched
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(d, _)| ScoredDoc {
                doc_id: d as u32,
                title: self.titles[d].clone(),
                score: acc[d],
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc_id.cmp(&b.doc_id)));
        hits.truncate(n);
        Ok(hits)
    }

    /// Serialize to the versioned binary layout documented in
    /// `docs/index-format.md`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        put_str(&mut out, self.lang.as_str());
        out.extend_from_slice(&self.params.k1.to_le_bytes());
        out.extend_from_slice(&self.params.b.to_le_bytes());
        out.extend_from_slice(&(self.n_docs() as u32).to_le_bytes());
        for (len, title) in self.doc_lens.iter().zip(&self.titles) {
            out.extend_from_slice(&len.to_le_bytes());
            put_str(&mut out, title);
        }
        out.extend_from_slice(&(self.postings.len() as u32).to_le_bytes());
        for (term, list) in &self.postings {
            put_str(&mut out, term);
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for p in list {
                out.extend_from_slice(&p.doc_id.to_le_bytes());
                out.extend_from_slice(&p.tf.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err(RetrievalError::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(RetrievalError::Corrupt(format!("unsupported version {version}")));
        }
        let lang = Lang::new(&r.string()?).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
        let params = Bm25Params::new(r.f64()?, r.f64()?)?;
        let n_docs = r.u32()? as usize;
        let mut doc_lens = Vec::with_capacity(n_docs);
        let mut titles = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_lens.push(r.u32()?);
            titles.push(r.string()?);
        }
        let n_terms = r.u32()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = r.string()?;
            let len = r.u32()? as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let p = Posting {
                    doc_id: r.u32()?,
                    tf: r.u32()?,
                };
                if p.doc_id as usize >= n_docs || list.last().is_some_and(|q: &Posting| q.doc_id >= p.doc_id) {
                    return Err(RetrievalError::Corrupt(format!("bad postings for {term:?}")));
                }
                list.push(p);
            }
            postings.insert(term, list);
        }
        if r.pos != bytes.len() {
            return Err(RetrievalError::Corrupt("trailing bytes".into()));
        }
        Ok(Self::assemble(lang, params, titles, doc_lens, postings))
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        corpus_store::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = fs::read(path).map_err(|source| corpus_store::CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RetrievalError> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| RetrievalError::Corrupt("truncated".into()))?;
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, RetrievalError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, RetrievalError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, RetrievalError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| RetrievalError::Corrupt(e.to_string()))
    }
}
