//! Chat-completions clients: an HTTP client with retries, a scripted mock,
//! bounded-concurrency batching and a redacted audit log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::parse::{parse_response, ParsedPrediction};
use super::prompt::PromptBundle;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_CREDENTIAL_ENV: &str = "EOCRC_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff scaled by a seeded jitter factor in `[0.5, 1)`.
    pub fn delay(&self, attempt: u32, jitter_seed: u64) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let factor = 0.5 + 0.5 * seed::rng(jitter_seed).random::<f64>();
        Duration::from_millis((capped * factor) as u64)
    }
}

/// Endpoint settings. The credential itself is never stored here; only the
/// name of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub credential_env: String,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    pub seed: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-2024-08-06".into(),
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            timeout_secs: 120,
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            seed: 0,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrency == 0 {
            return Err(Error::Config("llm.endpoint.max_concurrency must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("llm.endpoint.retry.max_attempts must be at least 1".into()));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(Error::Config("llm.endpoint needs base_url and model".into()));
        }
        Ok(())
    }
}

pub trait ChatEndpoint: Sync {
    /// Sends one request; `request_id` keys retry jitter and audit records.
    fn complete(&self, bundle: &PromptBundle, request_id: u64) -> Result<String>;
}

/// Replaces every occurrence of `secret` (when non-empty) with a marker.
pub fn redact(text: &str, secret: Option<&str>) -> String {
    match secret {
        Some(s) if !s.is_empty() => text.replace(s, "[REDACTED]"),
        _ => text.to_string(),
    }
}

/// Append-only JSON Lines log of requests and responses.
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AuditLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(AuditLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, entry: &Value, secret: Option<&str>) -> Result<()> {
        let line = redact(&entry.to_string(), secret);
        let mut f = self.file.lock().expect("audit log lock poisoned");
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

pub fn request_body(model: &str, bundle: &PromptBundle) -> Value {
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": bundle.user_text},
        ],
        "max_tokens": bundle.generation.max_tokens,
        "temperature": bundle.generation.temperature,
    })
}

pub struct HttpEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
    audit: Option<AuditLog>,
    sleep: fn(Duration),
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig, audit: Option<AuditLog>) -> Result<Self> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpEndpoint {
            config,
            agent,
            audit,
            sleep: std::thread::sleep,
        })
    }

    /// Replaces the backoff sleep, e.g. to skip real waiting in tests.
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> (Attempt, Option<u16>) {
        let mut req = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(k) = key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        match req.send_json(body) {
            Err(e) => (Attempt::Retry(format!("transport: {e}")), None),
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = match resp.body_mut().read_to_string() {
                    Ok(t) => t,
                    Err(e) => return (Attempt::Retry(format!("reading body: {e}")), Some(status)),
                };
                if status == 429 || status >= 500 {
                    return (Attempt::Retry(format!("HTTP {status}: {text}")), Some(status));
                }
                if !(200..300).contains(&status) {
                    return (Attempt::Fatal(format!("HTTP {status}: {text}")), Some(status));
                }
                let parsed: std::result::Result<Value, _> = serde_json::from_str(&text);
                match parsed.ok().and_then(|v| v["choices"][0]["message"]["content"].as_str().map(str::to_string)) {
                    Some(content) => (Attempt::Done(content), Some(status)),
                    None => (Attempt::Fatal(format!("unexpected response body: {text}")), Some(status)),
                }
            }
        }
    }
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&self, bundle: &PromptBundle, request_id: u64) -> Result<String> {
        let key = std::env::var(&self.config.credential_env).ok().filter(|k| !k.is_empty());
        let body = request_body(&self.config.model, bundle);
        let policy = &self.config.retry;
        let mut last = String::new();
        for attempt in 1..=policy.max_attempts {
            let (outcome, status) = self.attempt(&body, key.as_deref());
            if let Some(audit) = &self.audit {
                let (kind, payload) = match &outcome {
                    Attempt::Done(t) => ("ok", t.as_str()),
                    Attempt::Retry(t) => ("retry", t.as_str()),
                    Attempt::Fatal(t) => ("error", t.as_str()),
                };
                audit.record(
                    &json!({
                        "request_id": request_id,
                        "attempt": attempt,
                        "url": self.url(),
                        "request": body,
                        "status": status,
                        "outcome": kind,
                        "response": payload,
                    }),
                    key.as_deref(),
                )?;
            }
            match outcome {
                Attempt::Done(t) => return Ok(t),
                Attempt::Fatal(m) => {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message: redact(&m, key.as_deref()),
                    })
                }
                Attempt::Retry(m) => {
                    last = m;
                    if attempt < policy.max_attempts {
                        let jitter = seed::derive_index(seed::derive_index(self.config.seed, request_id), attempt as u64);
                        (self.sleep)(policy.delay(attempt, jitter));
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts: policy.max_attempts,
            message: redact(&last, key.as_deref()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Fires when the user text contains this substring.
    pub contains: String,
    pub reply: String,
}

/// Deterministic offline endpoint: the first matching rule's reply, or
/// `default_reply`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEndpoint {
    pub rules: Vec<MockRule>,
    #[serde(default = "default_reply")]
    pub default_reply: String,
}

fn default_reply() -> String {
    "Answer: No".into()
}

impl MockEndpoint {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockEndpoint {
            rules,
            default_reply: default_reply(),
        }
    }
}

impl ChatEndpoint for MockEndpoint {
    fn complete(&self, bundle: &PromptBundle, _request_id: u64) -> Result<String> {
        Ok(self
            .rules
            .iter()
            .find(|r| bundle.user_text.contains(&r.contains))
            .map(|r| r.reply.clone())
            .unwrap_or_else(|| self.default_reply.clone()))
    }
}

pub fn predict_with_endpoint(endpoint: &dyn ChatEndpoint, bundle: &PromptBundle, request_id: u64) -> Result<ParsedPrediction> {
    parse_response(&endpoint.complete(bundle, request_id)?)
}

/// Completes every bundle with at most `max_concurrency` requests in flight.
/// Results come back in input order.
pub fn complete_batch(endpoint: &dyn ChatEndpoint, bundles: &[PromptBundle], max_concurrency: usize) -> Vec<Result<String>> {
    let workers = max_concurrency.max(1).min(bundles.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<String>>>> = bundles.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= bundles.len() {
                    break;
                }
                let r = endpoint.complete(&bundles[i], i as u64);
                *slots[i].lock().expect("slot lock poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("slot lock poisoned")
                .unwrap_or_else(|| Err(Error::Transport {
                    attempts: 0,
                    message: "request never ran".into(),
                }))
        })
        .collect()
}

/// Parses a batch of replies; unparseable replies become negative answers
/// with a warning so that one malformed reply does not sink a test run.
pub fn parse_lenient(replies: Vec<Result<String>>) -> Result<Vec<ParsedPrediction>> {
    replies
        .into_iter()
        .enumerate()
        .map(|(i, r)| match parse_response(&r?) {
            Ok(p) => Ok(p),
            Err(Error::Parse { reason, .. }) => {
                warn!("request {i}: {reason}; counted as a negative answer");
                Ok(ParsedPrediction {
                    answer: false,
                    probability: None,
                    explanation: String::new(),
                })
            }
            Err(e) => Err(e),
        })
        .collect()
}
