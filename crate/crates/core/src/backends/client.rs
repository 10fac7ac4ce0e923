use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::protocol::*;
use crate::lang::Lang;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Translate,
    Score,
    Generate,
}

impl Role {
    pub fn env_var(self) -> &'static str {
        match self {
            Role::Translate => "CROSSQA_TRANSLATE_URL",
            Role::Score => "CROSSQA_SCORE_URL",
            Role::Generate => "CROSSQA_GENERATE_URL",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Translate => "translate",
            Role::Score => "score",
            Role::Generate => "generate",
        })
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_max_in_flight() -> usize {
    8
}
fn default_backoff_base_ms() -> u64 {
    250
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub role: Role,
    /// Base URL; the route path is appended.
    pub endpoint: String,
    /// Identifier recorded in answer traces. Defaults to the role name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub jitter_seed: u64,
}

impl BackendConfig {
    pub fn new(role: Role, endpoint: impl Into<String>) -> Self {
        BackendConfig {
            role,
            endpoint: endpoint.into(),
            name: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            backoff_base_ms: default_backoff_base_ms(),
            jitter_seed: 0,
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.role.to_string())
    }

    /// Replace the endpoint with the role's environment variable, when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(self.role.env_var()) {
            if !url.trim().is_empty() {
                self.endpoint = url.trim().to_string();
            }
        }
    }

    fn url(&self, route: &str) -> String {
        format!("{}{}", self.endpoint.trim_end_matches('/'), route)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WireErrorKind {
    Timeout,
    Transport,
    Protocol,
    RemoteFailure,
}

impl fmt::Display for WireErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WireErrorKind::Timeout => "timeout",
            WireErrorKind::Transport => "transport",
            WireErrorKind::Protocol => "protocol",
            WireErrorKind::RemoteFailure => "remote-failure",
        })
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{kind} error: {detail}")]
pub struct WireError {
    pub kind: WireErrorKind,
    pub detail: String,
}

impl WireError {
    pub fn new(kind: WireErrorKind, detail: impl Into<String>) -> Self {
        WireError {
            kind,
            detail: detail.into(),
        }
    }

    fn protocol(detail: impl Into<String>) -> Self {
        Self::new(WireErrorKind::Protocol, detail)
    }

    /// Protocol errors are the caller's fault and are never retried.
    pub fn is_retryable(&self) -> bool {
        self.kind != WireErrorKind::Protocol
    }
}

/// Exponential backoff with a seeded multiplicative jitter of at most 20%.
#[derive(Debug)]
pub struct Backoff {
    base: Duration,
    rng: ChaCha8Rng,
}

impl Backoff {
    pub const FACTOR: u32 = 2;
    pub const MAX_JITTER: f64 = 0.2;

    pub fn new(base: Duration, seed: u64) -> Self {
        Backoff {
            base,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&mut self, retry: u32) -> Duration {
        let nominal = self.base * Self::FACTOR.saturating_pow(retry.saturating_sub(1));
        let jitter: f64 = self.rng.random_range(0.0..Self::MAX_JITTER);
        nominal.mul_f64(1.0 + jitter)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub calls: u64,
    pub attempts: u64,
    pub retries: u64,
}

/// HTTP client for one backend role. Cheap to share behind an `Arc`.
pub struct BackendClient {
    cfg: BackendConfig,
    http: reqwest::Client,
    permits: Semaphore,
    backoff: Mutex<Backoff>,
    calls: AtomicU64,
    attempts: AtomicU64,
    retries: AtomicU64,
}

impl fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendClient").field("cfg", &self.cfg).finish()
    }
}

impl BackendClient {
    pub fn new(cfg: BackendConfig) -> Result<Arc<Self>, WireError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| WireError::new(WireErrorKind::Transport, e.to_string()))?;
        Ok(Arc::new(BackendClient {
            permits: Semaphore::new(cfg.max_in_flight.max(1)),
            backoff: Mutex::new(Backoff::new(
                Duration::from_millis(cfg.backoff_base_ms),
                cfg.jitter_seed,
            )),
            http,
            cfg,
            calls: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        }))
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn stats(&self) -> CallStats {
        CallStats {
            calls: self.calls.load(Ordering::Relaxed),
            attempts: self.attempts.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
        }
    }

    async fn attempt<Resp: DeserializeOwned>(&self, url: &str, body: &[u8]) -> Result<Resp, WireError> {
        let resp = self
            .http
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send()
            .await
            .map_err(classify)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(classify)?;
        if status.is_server_error() {
            return Err(WireError::new(
                WireErrorKind::RemoteFailure,
                format!("{url} returned {status}: {}", String::from_utf8_lossy(&bytes)),
            ));
        }
        if status != reqwest::StatusCode::OK {
            return Err(WireError::protocol(format!(
                "{url} returned {status}: {}",
                String::from_utf8_lossy(&bytes)
            )));
        }
        serde_json::from_slice(&bytes)
            .map_err(|e| WireError::protocol(format!("undecodable response from {url}: {e}")))
    }

    /// POST `req` to `route`, retrying timeouts, transport errors and 5xx
    /// responses up to `max_retries` times.
    pub async fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        route: &str,
        req: &Req,
    ) -> Result<Resp, WireError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|e| WireError::new(WireErrorKind::Transport, e.to_string()))?;
        let body = serde_json::to_vec(req).map_err(|e| WireError::protocol(e.to_string()))?;
        let url = self.cfg.url(route);
        self.calls.fetch_add(1, Ordering::Relaxed);

        let mut retry = 0;
        loop {
            self.attempts.fetch_add(1, Ordering::Relaxed);
            match self.attempt(&url, &body).await {
                Ok(resp) => return Ok(resp),
                Err(e) if e.is_retryable() && retry < self.cfg.max_retries => {
                    retry += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    let delay = self.backoff.lock().expect("backoff lock").delay(retry);
                    tracing::debug!("{} attempt failed ({e}); retrying in {delay:?}", self.cfg.role);
                    tokio::time::sleep(delay).await;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Translate `text`. Identical languages return the input without a request.
    pub async fn translate(&self, text: &str, src: &Lang, tgt: &Lang) -> Result<String, WireError> {
        if src == tgt {
            return Ok(text.to_string());
        }
        let resp: TranslateResponse = self
            .call(
                TRANSLATE_ROUTE,
                &TranslateRequest {
                    text: text.to_string(),
                    source_lang: src.to_string(),
                    target_lang: tgt.to_string(),
                },
            )
            .await?;
        if resp.translation.trim().is_empty() {
            return Err(WireError::protocol("empty translation"));
        }
        Ok(resp.translation)
    }

    /// One score per candidate, in candidate order.
    pub async fn score(&self, question: &str, candidates: &[String]) -> Result<Vec<f64>, WireError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let resp: ScoreResponse = self
            .call(
                SCORE_ROUTE,
                &ScoreRequest {
                    question: question.to_string(),
                    candidates: candidates.to_vec(),
                },
            )
            .await?;
        if resp.scores.len() != candidates.len() {
            return Err(WireError::protocol(format!(
                "expected {} scores, got {}",
                candidates.len(),
                resp.scores.len()
            )));
        }
        if resp.scores.iter().any(|s| !s.is_finite()) {
            return Err(WireError::protocol("non-finite score"));
        }
        Ok(resp.scores)
    }

    /// Ask the generator for an answer. An empty candidate list is closed-book mode.
    pub async fn generate(
        &self,
        question: &str,
        candidates: &[WireCandidate],
        target_lang: &Lang,
        max_new_chars: usize,
    ) -> Result<String, WireError> {
        let resp: GenerateResponse = self
            .call(
                GENERATE_ROUTE,
                &GenerateRequest {
                    question: question.to_string(),
                    candidates: candidates.to_vec(),
                    target_lang: target_lang.to_string(),
                    max_new_chars,
                },
            )
            .await?;
        if resp.answer.trim().is_empty() {
            return Err(WireError::protocol("empty answer"));
        }
        Ok(resp.answer)
    }
}

fn classify(e: reqwest::Error) -> WireError {
    let kind = if e.is_timeout() {
        WireErrorKind::Timeout
    } else if e.is_decode() {
        WireErrorKind::Protocol
    } else {
        WireErrorKind::Transport
    };
    WireError::new(kind, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_seeded_and_bounded() {
        let base = Duration::from_millis(250);
        let mut a = Backoff::new(base, 7);
        let mut b = Backoff::new(base, 7);
        for retry in 1..5 {
            let d = a.delay(retry);
            assert_eq!(d, b.delay(retry));
            let nominal = base * 2u32.pow(retry - 1);
            assert!(d >= nominal && d <= nominal.mul_f64(1.2), "{d:?}");
        }
    }

    #[test]
    fn retry_classes() {
        assert!(WireError::new(WireErrorKind::Timeout, "").is_retryable());
        assert!(WireError::new(WireErrorKind::RemoteFailure, "").is_retryable());
        assert!(!WireError::new(WireErrorKind::Protocol, "").is_retryable());
    }

    #[test]
    fn config_defaults_from_toml() {
        let cfg: BackendConfig = toml::from_str("role = \"score\"\nendpoint = \"http://h:1/\"").unwrap();
        assert_eq!(cfg.timeout_ms, 30_000);
        assert_eq!(cfg.max_retries, 2);
        assert_eq!(cfg.max_in_flight, 8);
        assert_eq!(cfg.url("/score"), "http://h:1/score");
        assert_eq!(cfg.display_name(), "score");
    }
}
