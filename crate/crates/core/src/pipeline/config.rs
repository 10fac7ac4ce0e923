use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::aggregation::{AggregationPolicy, ScoreNormalization};
use crate::as2::ScorerHandle;
use crate::backends::{BackendConfig, Role};
use crate::generation::GenerationSettings;
use crate::lang::Lang;
use crate::retrieval::DEFAULT_TOP_N;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Question-language documents only; no translation.
    Mono,
    /// Every configured language, with the question translated into each.
    #[default]
    Cross,
}

impl std::str::FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "mono" | "multi" => Ok(Setting::Mono),
            "cross" => Ok(Setting::Cross),
            other => Err(format!("unknown setting {other:?} (expected mono or cross)")),
        }
    }
}

/// One backend as written in the config file. Missing knobs take the
/// client defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_seed: Option<u64>,
}

impl BackendSpec {
    pub fn new(endpoint: impl Into<String>) -> Self {
        BackendSpec {
            endpoint: endpoint.into(),
            ..Default::default()
        }
    }

    pub fn to_config(&self, role: Role) -> BackendConfig {
        let mut cfg = BackendConfig::new(role, self.endpoint.clone());
        cfg.name = self.name.clone();
        if let Some(v) = self.timeout_ms {
            cfg.timeout_ms = v;
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = self.max_in_flight {
            cfg.max_in_flight = v;
        }
        if let Some(v) = self.backoff_base_ms {
            cfg.backoff_base_ms = v;
        }
        if let Some(v) = self.jitter_seed {
            cfg.jitter_seed = v;
        }
        cfg
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    #[serde(default)]
    pub translate: BackendSpec,
    /// Connection knobs for a remote scorer; its endpoint may also come from
    /// the scorer handle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<BackendSpec>,
    #[serde(default)]
    pub generate: BackendSpec,
}

fn default_languages() -> Vec<Lang> {
    crate::lang::LanguageSet::default().iter().cloned().collect()
}
fn default_retrieval_n() -> usize {
    DEFAULT_TOP_N
}
fn default_policy() -> AggregationPolicy {
    AggregationPolicy::top_per_lang()
}
fn default_parallelism() -> usize {
    1
}

/// Everything the engine needs, loaded from TOML. See `docs/config.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_languages")]
    pub languages: Vec<Lang>,
    #[serde(default)]
    pub setting: Setting,
    #[serde(default = "default_retrieval_n")]
    pub retrieval_n: usize,
    #[serde(default)]
    pub as2_scorer: ScorerHandle,
    #[serde(default = "default_policy")]
    pub policy: AggregationPolicy,
    #[serde(default)]
    pub score_normalization: ScoreNormalization,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub backends: BackendsConfig,
    /// Root of the document store (`<store_root>/<lang>/docs.*`).
    pub store_root: PathBuf,
    /// Directory holding `<lang>.bm25` index files; defaults to `store_root`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_root: Option<PathBuf>,
    /// Optional directory of `<lang>.txt` abbreviation lists for segmentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abbreviation_dir: Option<PathBuf>,
    /// Where the service persists traces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_dir: Option<PathBuf>,
    /// Questions answered concurrently by the batch runner.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            languages: default_languages(),
            setting: Setting::default(),
            retrieval_n: default_retrieval_n(),
            as2_scorer: ScorerHandle::default(),
            policy: default_policy(),
            score_normalization: ScoreNormalization::default(),
            generation: GenerationSettings::default(),
            backends: BackendsConfig::default(),
            store_root: store_root.into(),
            index_root: None,
            abbreviation_dir: None,
            trace_dir: None,
            parallelism: default_parallelism(),
        }
    }

    pub fn from_toml_str(raw: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(raw).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply environment overrides. Relative paths
    /// in the file are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.apply_env_from(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store_root);
        for p in [&mut self.index_root, &mut self.abbreviation_dir, &mut self.trace_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Apply `CROSSQA_*` overrides. `lookup` is `std::env::var` in
    /// production and a map in tests.
    pub fn apply_env_from(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), PipelineError> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(v) = get("CROSSQA_LANGUAGES") {
            self.languages = v
                .split(',')
                .map(|c| Lang::new(c.trim()))
                .collect::<Result<_, _>>()
                .map_err(|e| PipelineError::Config(format!("CROSSQA_LANGUAGES: {e}")))?;
        }
        if let Some(v) = get("CROSSQA_SETTING") {
            self.setting = v.parse().map_err(PipelineError::Config)?;
        }
        if let Some(v) = get("CROSSQA_RETRIEVAL_N") {
            self.retrieval_n = v
                .trim()
                .parse()
                .map_err(|e| PipelineError::Config(format!("CROSSQA_RETRIEVAL_N: {e}")))?;
        }
        if let Some(v) = get("CROSSQA_PARALLELISM") {
            self.parallelism = v
                .trim()
                .parse()
                .map_err(|e| PipelineError::Config(format!("CROSSQA_PARALLELISM: {e}")))?;
        }
        if let Some(v) = get("CROSSQA_STORE") {
            self.store_root = PathBuf::from(v.trim());
        }
        if let Some(v) = get("CROSSQA_INDEX_DIR") {
            self.index_root = Some(PathBuf::from(v.trim()));
        }
        if let Some(v) = get("CROSSQA_TRACE_DIR") {
            self.trace_dir = Some(PathBuf::from(v.trim()));
        }
        if let Some(v) = get(Role::Translate.env_var()) {
            self.backends.translate.endpoint = v.trim().to_string();
        }
        if let Some(v) = get(Role::Generate.env_var()) {
            self.backends.generate.endpoint = v.trim().to_string();
        }
        if let Some(v) = get(Role::Score.env_var()) {
            self.as2_scorer = ScorerHandle::Remote {
                endpoint: v.trim().to_string(),
            };
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.languages.is_empty() {
            return bad("languages must not be empty".into());
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.languages.iter().find(|l| !seen.insert(*l)) {
            return bad(format!("language {dup} listed twice"));
        }
        if self.retrieval_n == 0 {
            return bad("retrieval_n must be positive".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive".into());
        }
        self.check_setting(self.setting, self.policy)
    }

    /// Constraints between setting, policy and languages, also applied to
    /// per-request overrides.
    pub fn check_setting(&self, setting: Setting, policy: AggregationPolicy) -> Result<(), PipelineError> {
        if setting == Setting::Cross {
            if self.languages.len() < 2 {
                return Err(PipelineError::Config("cross setting needs at least two languages".into()));
            }
            if matches!(policy, AggregationPolicy::MonoTopK { .. }) {
                return Err(PipelineError::Config("mono-top-k policy cannot be used in the cross setting".into()));
            }
        }
        Ok(())
    }

    /// Policy used when a request overrides the setting but not the policy.
    pub fn default_policy_for(&self, setting: Setting) -> AggregationPolicy {
        if setting == self.setting {
            self.policy
        } else {
            match setting {
                Setting::Mono => AggregationPolicy::mono(),
                Setting::Cross => AggregationPolicy::top_per_lang(),
            }
        }
    }

    pub fn index_path(&self, lang: &Lang) -> PathBuf {
        self.index_root
            .as_ref()
            .unwrap_or(&self.store_root)
            .join(format!("{lang}.bm25"))
    }

    pub fn backend_config(&self, role: Role) -> Option<BackendConfig> {
        match role {
            Role::Translate => Some(self.backends.translate.to_config(role)),
            Role::Generate => Some(self.backends.generate.to_config(role)),
            Role::Score => match &self.as2_scorer {
                ScorerHandle::LexicalBaseline => None,
                ScorerHandle::Remote { endpoint } => {
                    let mut spec = self.backends.score.clone().unwrap_or_default();
                    if !endpoint.is_empty() {
                        spec.endpoint = endpoint.clone();
                    }
                    Some(spec.to_config(role))
                }
            },
        }
    }
}

/// The answer-relevant part of the configuration. Endpoints, paths and
/// parallelism are left out so that traces do not depend on where the
/// backends run or how many questions run at once.
#[derive(Serialize)]
pub(crate) struct AnswerIdentity<'a> {
    pub languages: &'a [Lang],
    pub setting: Setting,
    pub retrieval_n: usize,
    pub scorer: String,
    pub policy: AggregationPolicy,
    pub score_normalization: ScoreNormalization,
    pub generation: &'a GenerationSettings,
    pub translate: String,
    pub generate: String,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
