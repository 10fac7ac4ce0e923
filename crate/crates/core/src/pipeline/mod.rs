//! End-to-end orchestration: translate, retrieve, segment, rank, aggregate,
//! generate, and record an [`AnswerTrace`] for every question.

mod batch;
mod config;
pub mod service;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use batch::{read_summary, run_batch, BatchReport, SummaryRow};
pub use config::{BackendSpec, BackendsConfig, PipelineConfig, Setting};

use crate::aggregation::{aggregate_with, AggregationError, AggregationPolicy, MultilingualCandidateSet};
use crate::as2::{rank_candidates, Scorer};
use crate::backends::{BackendClient, Role, WireError};
use crate::corpus_store::{write_atomic, CorpusError, DocStore, Question};
use crate::generation::{assemble_prompt, generate_from_prompt, GeneratedAnswer, GenerationError, Prompt};
use crate::lang::Lang;
use crate::retrieval::{Bm25Params, Index, RetrievalError, ScoredDoc};
use crate::segmentation::{extract_candidates_with, Candidate, Segmenter};
use config::{sha256_hex, AnswerIdentity};

pub const ENGINE_VERSION: &str = concat!("crossqa ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("language {0} is not configured")]
    UnknownLanguage(Lang),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("backend client: {0}")]
    Client(#[from] WireError),
    #[error("question {q_id}: every language failed: {}", describe_failures(.failures))]
    AllLanguagesFailed {
        q_id: String,
        failures: Vec<(Lang, String)>,
        trace: Box<AnswerTrace>,
    },
    #[error("question {q_id}: aggregation failed: {source}")]
    Aggregation {
        q_id: String,
        source: AggregationError,
        trace: Box<AnswerTrace>,
    },
    #[error("{source}")]
    Generation {
        source: GenerationError,
        trace: Box<AnswerTrace>,
    },
    #[error("writing {path}: {message}")]
    Persist { path: PathBuf, message: String },
}

fn describe_failures(failures: &[(Lang, String)]) -> String {
    failures
        .iter()
        .map(|(l, e)| format!("{l} ({e})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl PipelineError {
    /// The trace recorded up to the failing stage, when there is one.
    pub fn trace(&self) -> Option<&AnswerTrace> {
        match self {
            PipelineError::AllLanguagesFailed { trace, .. }
            | PipelineError::Aggregation { trace, .. }
            | PipelineError::Generation { trace, .. } => Some(trace),
            _ => None,
        }
    }

    /// True when the failure came from a remote backend rather than the input.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::AllLanguagesFailed { .. } | PipelineError::Generation { .. }
        )
    }
}

/// Everything that happened in one language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageTrace {
    pub lang: Lang,
    /// The query used for retrieval and ranking: the question itself in its
    /// own language, its translation elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub translated: bool,
    pub docs: Vec<ScoredDoc>,
    /// The full ranked pool, best first.
    pub candidates: Vec<Candidate>,
    /// Why this language was dropped, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translate: Option<String>,
    pub scorer: String,
    pub generate: String,
}

/// Provenance record for one answered (or failed) question. Contains no
/// timings, so identical inputs give byte-identical traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub trace_id: String,
    pub engine_version: String,
    pub config_hash: String,
    pub question: Question,
    pub setting: Setting,
    pub policy: AggregationPolicy,
    pub backends: BackendIds,
    /// In configuration order.
    pub languages: Vec<LanguageTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<MultilingualCandidateSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<Prompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<GeneratedAnswer>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnswerTrace {
    pub fn file_name(&self) -> String {
        format!("{}.json", self.trace_id)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("trace serializes");
        out.push(b'\n');
        out
    }

    /// Write to `<dir>/<trace_id>.json`, replacing any previous version.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        let persist_err = |message: String| PipelineError::Persist {
            path: dir.to_path_buf(),
            message,
        };
        std::fs::create_dir_all(dir).map_err(|e| persist_err(e.to_string()))?;
        let path = dir.join(self.file_name());
        write_atomic(&path, &self.to_json()).map_err(|e| persist_err(e.to_string()))?;
        Ok(path)
    }
}

/// Wall-clock milliseconds per stage. Per-language stages are summed over
/// languages even though they run concurrently.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub translate_ms: f64,
    pub retrieve_ms: f64,
    pub rank_ms: f64,
    pub aggregate_ms: f64,
    pub generate_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    fn add(&mut self, o: &StageTimings) {
        self.translate_ms += o.translate_ms;
        self.retrieve_ms += o.retrieve_ms;
        self.rank_ms += o.rank_ms;
        self.aggregate_ms += o.aggregate_ms;
        self.generate_ms += o.generate_ms;
        self.total_ms += o.total_ms;
    }

    fn scaled(&self, f: f64) -> StageTimings {
        StageTimings {
            translate_ms: self.translate_ms * f,
            retrieve_ms: self.retrieve_ms * f,
            rank_ms: self.rank_ms * f,
            aggregate_ms: self.aggregate_ms * f,
            generate_ms: self.generate_ms * f,
            total_ms: self.total_ms * f,
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

#[derive(Clone, Debug)]
pub struct Answered {
    pub trace: AnswerTrace,
    pub timings: StageTimings,
}

/// Per-request overrides of the configured setting and policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<AggregationPolicy>,
}

struct LanguageResources {
    store: DocStore,
    index: Index,
}

/// Loaded stores, indices and backend clients. Immutable once built and
/// shared across concurrent questions.
pub struct Engine {
    cfg: PipelineConfig,
    resources: HashMap<Lang, LanguageResources>,
    segmenter: Segmenter,
    translate: Arc<BackendClient>,
    scorer: Scorer,
    generate: Arc<BackendClient>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("cfg", &self.cfg).finish()
    }
}

impl Engine {
    /// Open the store and index of every configured language. A missing
    /// index file is built in memory from the store.
    pub fn load(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let mut resources = HashMap::new();
        for lang in &cfg.languages {
            let store = DocStore::open(&cfg.store_root, lang)?;
            let path = cfg.index_path(lang);
            let index = if path.exists() {
                let index = Index::load(&path)?;
                if index.lang() != lang || index.n_docs() != store.len() {
                    return Err(PipelineError::Config(format!(
                        "index {} does not match the {lang} store",
                        path.display()
                    )));
                }
                index
            } else {
                tracing::warn!("no index at {}; building {lang} in memory", path.display());
                Index::build(&store, Bm25Params::default())?
            };
            resources.insert(lang.clone(), LanguageResources { store, index });
        }
        let segmenter = match &cfg.abbreviation_dir {
            Some(dir) => Segmenter::default()
                .with_abbreviation_dir(dir)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?,
            None => Segmenter::default(),
        };
        let client = |role: Role| BackendClient::new(cfg.backend_config(role).expect("role has a config"));
        let translate = client(Role::Translate)?;
        let generate = client(Role::Generate)?;
        let scorer = match cfg.backend_config(Role::Score) {
            Some(score_cfg) => Scorer::Remote(BackendClient::new(score_cfg)?),
            None => Scorer::Lexical,
        };
        Ok(Engine {
            cfg,
            resources,
            segmenter,
            translate,
            scorer,
            generate,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn languages(&self) -> &[Lang] {
        &self.cfg.languages
    }

    pub fn backend_ids(&self, setting: Setting) -> BackendIds {
        BackendIds {
            translate: (setting == Setting::Cross).then(|| self.translate.config().display_name()),
            scorer: self.scorer.name(),
            generate: self.generate.config().display_name(),
        }
    }

    /// Hash of the answer-relevant configuration for this setting and policy.
    pub fn config_hash(&self, setting: Setting, policy: AggregationPolicy) -> String {
        let ids = self.backend_ids(setting);
        let identity = AnswerIdentity {
            languages: &self.cfg.languages,
            setting,
            retrieval_n: self.cfg.retrieval_n,
            scorer: ids.scorer,
            policy,
            score_normalization: self.cfg.score_normalization,
            generation: &self.cfg.generation,
            translate: ids.translate.unwrap_or_default(),
            generate: ids.generate,
        };
        sha256_hex(&serde_json::to_vec(&identity).expect("identity serializes"))
    }

    pub fn trace_id(q_id: &str, config_hash: &str) -> String {
        let mut key = Vec::with_capacity(q_id.len() + config_hash.len() + 1);
        key.extend_from_slice(q_id.as_bytes());
        key.push(0);
        key.extend_from_slice(config_hash.as_bytes());
        sha256_hex(&key)
    }

    /// Resolve overrides into an effective (setting, policy) pair.
    pub fn resolve_options(&self, opts: AnswerOptions) -> Result<(Setting, AggregationPolicy), PipelineError> {
        let setting = opts.setting.unwrap_or(self.cfg.setting);
        let policy = opts.policy.unwrap_or_else(|| self.cfg.default_policy_for(setting));
        self.cfg.check_setting(setting, policy)?;
        Ok((setting, policy))
    }

    pub async fn answer(&self, q: &Question) -> Result<Answered, PipelineError> {
        self.answer_with(q, AnswerOptions::default()).await
    }

    pub async fn answer_with(&self, q: &Question, opts: AnswerOptions) -> Result<Answered, PipelineError> {
        let started = Instant::now();
        let (setting, policy) = self.resolve_options(opts)?;
        // cross questions are translated into every configured language, so
        // only the mono setting needs a store in the question's language
        if setting == Setting::Mono && !self.resources.contains_key(&q.lang) {
            return Err(PipelineError::UnknownLanguage(q.lang.clone()));
        }
        let config_hash = self.config_hash(setting, policy);
        let mut trace = AnswerTrace {
            trace_id: Self::trace_id(&q.q_id, &config_hash),
            engine_version: ENGINE_VERSION.to_string(),
            config_hash,
            question: q.clone(),
            setting,
            policy,
            backends: self.backend_ids(setting),
            languages: Vec::new(),
            m: None,
            prompt: None,
            answer: None,
            warnings: Vec::new(),
            error: None,
        };

        let langs: Vec<&Lang> = match setting {
            Setting::Mono => vec![&q.lang],
            Setting::Cross => self.cfg.languages.iter().collect(),
        };
        // concurrent per-language work; join_all keeps configuration order
        let results = futures::future::join_all(langs.iter().map(|l| self.run_language(q, l))).await;

        let mut timings = StageTimings::default();
        let mut pools = BTreeMap::new();
        let mut failures = Vec::new();
        for (lt, t) in results {
            timings.add(&t);
            match &lt.error {
                Some(e) => {
                    trace.warnings.push(format!("dropped {}: {e}", lt.lang));
                    failures.push((lt.lang.clone(), e.clone()));
                }
                None => {
                    pools.insert(lt.lang.clone(), lt.candidates.clone());
                }
            }
            trace.languages.push(lt);
        }
        for w in &trace.warnings {
            tracing::warn!("question {}: {w}", q.q_id);
        }
        if pools.is_empty() {
            trace.error = Some(format!("every language failed: {}", describe_failures(&failures)));
            return Err(PipelineError::AllLanguagesFailed {
                q_id: q.q_id.clone(),
                failures,
                trace: Box::new(trace),
            });
        }

        let t = Instant::now();
        let m = match aggregate_with(&pools, &q.lang, policy, self.cfg.score_normalization) {
            Ok(m) => m,
            Err(source) => {
                trace.error = Some(source.to_string());
                return Err(PipelineError::Aggregation {
                    q_id: q.q_id.clone(),
                    source,
                    trace: Box::new(trace),
                });
            }
        };
        let gen = &self.cfg.generation;
        let prompt = assemble_prompt(&q.text, &m, gen.prompt_budget, &gen.format);
        trace.m = Some(m);
        let prompt = match prompt {
            Ok(p) => p,
            Err(source) => {
                trace.error = Some(source.to_string());
                return Err(PipelineError::Generation {
                    source,
                    trace: Box::new(trace),
                });
            }
        };
        timings.aggregate_ms = ms_since(t);

        let t = Instant::now();
        let answer = generate_from_prompt(q, &prompt, &self.generate, gen.max_new_chars).await;
        timings.generate_ms = ms_since(t);
        trace.prompt = Some(prompt);
        match answer {
            Ok(a) => trace.answer = Some(a),
            Err(source) => {
                trace.error = Some(source.to_string());
                return Err(PipelineError::Generation {
                    source,
                    trace: Box::new(trace),
                });
            }
        }
        timings.total_ms = ms_since(started);
        Ok(Answered { trace, timings })
    }

    async fn run_language(&self, q: &Question, lang: &Lang) -> (LanguageTrace, StageTimings) {
        let mut timings = StageTimings::default();
        let mut lt = LanguageTrace {
            lang: lang.clone(),
            query: None,
            translated: lang != &q.lang,
            docs: Vec::new(),
            candidates: Vec::new(),
            error: None,
        };
        let Some(res) = self.resources.get(lang) else {
            lt.error = Some("language not loaded".into());
            return (lt, timings);
        };

        let t = Instant::now();
        let query = if lt.translated {
            match self.translate.translate(&q.text, &q.lang, lang).await {
                Ok(s) => s,
                Err(e) => {
                    lt.error = Some(format!("translation failed: {e}"));
                    timings.translate_ms = ms_since(t);
                    return (lt, timings);
                }
            }
        } else {
            q.text.clone()
        };
        timings.translate_ms = ms_since(t);
        lt.query = Some(query.clone());

        let t = Instant::now();
        let retrieved = res.index.search(&query, self.cfg.retrieval_n).and_then(|docs| {
            let fetched = docs
                .iter()
                .enumerate()
                .map(|(rank, d)| res.store.get(d.doc_id).map(|doc| (doc, rank)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((docs, fetched))
        });
        let (docs, fetched) = match retrieved {
            Ok(r) => r,
            Err(e) => {
                lt.error = Some(format!("retrieval failed: {e}"));
                timings.retrieve_ms = ms_since(t);
                return (lt, timings);
            }
        };
        let pool = extract_candidates_with(&self.segmenter, &fetched, lang);
        lt.docs = docs;
        timings.retrieve_ms = ms_since(t);

        // candidates are ranked against the query in their own language
        let t = Instant::now();
        let local_q = Question {
            text: query,
            lang: lang.clone(),
            ..q.clone()
        };
        match rank_candidates(&local_q, pool, &self.scorer).await {
            Ok(ranked) => lt.candidates = ranked,
            Err(e) => lt.error = Some(format!("ranking failed: {e}")),
        }
        timings.rank_ms = ms_since(t);
        (lt, timings)
    }
}
