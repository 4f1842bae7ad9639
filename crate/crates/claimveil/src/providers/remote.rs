//! HTTP clients for live providers.
//!
//! Wire contract (all payloads UTF-8 JSON over POST):
//!
//! - chat:             `{system, user, temperature, max_output}` -> `{text}`
//! - embedding:        `{text}` -> `{embedding: [..]}`
//! - token similarity: `{candidate, reference}` -> `{f1}`
//! - perplexity:       `{text}` -> `{perplexity}`
//!
//! Requests are retried per [`RetryPolicy`] with exponential backoff; a 429
//! honours `Retry-After` when present and only surfaces as
//! [`ProviderError::RateLimited`] once attempts are exhausted.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ChatProvider, ChatRequest, PerplexityProvider, ProviderError, SentenceEmbedderProvider,
    TokenSimilarityProvider,
};

/// Token-bucket limiter: at most `rate_per_sec` acquisitions per second
/// (burst of one second's worth). One bucket per binding; buckets are
/// shareable across concurrent campaigns.
pub struct RateLimiter {
    rate_per_sec: f64,
    state: Mutex<BucketState>,
}

struct BucketState {
    tokens: f64,
    last_refill: Instant,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64) -> Self {
        assert!(rate_per_sec > 0.0);
        Self {
            rate_per_sec,
            state: Mutex::new(BucketState { tokens: rate_per_sec, last_refill: Instant::now() }),
        }
    }

    /// Block until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let elapsed = now.duration_since(s.last_refill).as_secs_f64();
                s.tokens = (s.tokens + elapsed * self.rate_per_sec).min(self.rate_per_sec);
                s.last_refill = now;
                if s.tokens >= 1.0 {
                    s.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.tokens) / self.rate_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Retry contract: at most `max_attempts` total requests, sleeping
/// `backoff_base * 2^(attempt-1)` between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_base: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// POST `body` to `url`, rate-limited and retried per policy. Returns the
/// parsed JSON body.
pub(crate) fn post_json(
    url: &str,
    timeout: Duration,
    retry: &RetryPolicy,
    limiter: Option<&RateLimiter>,
    auth_bearer: Option<&str>,
    body: &Value,
) -> Result<Value, ProviderError> {
    let attempts = retry.max_attempts.max(1);
    let mut last_err = ProviderError::Unavailable("no attempt made".into());
    for attempt in 1..=attempts {
        if let Some(limiter) = limiter {
            limiter.acquire();
        }
        match post_once(url, timeout, auth_bearer, body) {
            Ok(v) => return Ok(v),
            Err(e) => {
                let retryable = matches!(
                    e,
                    ProviderError::RateLimited { .. }
                        | ProviderError::Timeout
                        | ProviderError::Unavailable(_)
                );
                if !retryable || attempt == attempts {
                    return Err(e);
                }
                let wait = match &e {
                    ProviderError::RateLimited { retry_after: Some(d) } => *d,
                    _ => retry.backoff(attempt),
                };
                std::thread::sleep(wait);
                last_err = e;
            }
        }
    }
    Err(last_err)
}

fn post_once(
    url: &str,
    timeout: Duration,
    auth_bearer: Option<&str>,
    body: &Value,
) -> Result<Value, ProviderError> {
    let mut builder = ureq::post(url)
        .config()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build();
    if let Some(token) = auth_bearer {
        builder = builder.header("Authorization", &format!("Bearer {token}"));
    }
    let mut response = builder.send_json(body).map_err(map_transport_error)?;
    let status = response.status().as_u16();
    match status {
        200..=299 => response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| ProviderError::MalformedResponse(e.to_string())),
        429 => {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            Err(ProviderError::RateLimited { retry_after })
        }
        500..=599 => Err(ProviderError::Unavailable(format!("server returned {status}"))),
        other => Err(ProviderError::MalformedResponse(format!("unexpected status {other}"))),
    }
}

fn map_transport_error(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::Unavailable(other.to_string()),
    }
}

fn field<'a>(value: &'a Value, name: &str) -> Result<&'a Value, ProviderError> {
    value
        .get(name)
        .ok_or_else(|| ProviderError::MalformedResponse(format!("missing field {name:?}")))
}

/// Remote chat model.
pub struct RemoteChat {
    pub url: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub auth_bearer: Option<String>,
    pub limiter: Option<Arc<RateLimiter>>,
}

impl RemoteChat {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            auth_bearer: None,
            limiter: None,
        }
    }
}

impl ChatProvider for RemoteChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "system": req.system_instructions,
            "user": req.user_content,
            "temperature": req.temperature,
            "max_output": req.max_output,
        });
        let reply = post_json(&self.url, self.timeout, &self.retry, self.limiter.as_deref(), self.auth_bearer.as_deref(), &body)?;
        field(&reply, "text")?
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::MalformedResponse("\"text\" is not a string".into()))
    }

    fn identity(&self) -> String {
        self.url.clone()
    }
}

/// Remote sentence embedder with a declared output dimension.
pub struct RemoteEmbedder {
    pub url: String,
    pub dimension: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub auth_bearer: Option<String>,
    pub limiter: Option<Arc<RateLimiter>>,
}

impl SentenceEmbedderProvider for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = serde_json::json!({ "text": text });
        let reply = post_json(&self.url, self.timeout, &self.retry, self.limiter.as_deref(), self.auth_bearer.as_deref(), &body)?;
        let raw = field(&reply, "embedding")?
            .as_array()
            .ok_or_else(|| ProviderError::MalformedResponse("\"embedding\" is not an array".into()))?;
        let v: Option<Vec<f64>> = raw.iter().map(Value::as_f64).collect();
        let v = v.ok_or_else(|| ProviderError::MalformedResponse("non-numeric embedding".into()))?;
        if v.len() != self.dimension {
            return Err(ProviderError::DimensionMismatch { declared: self.dimension, actual: v.len() });
        }
        Ok(v)
    }

    fn identity(&self) -> String {
        self.url.clone()
    }
}

/// Remote token-alignment F1 scorer with a declared rescaling baseline.
pub struct RemoteTokenSimilarity {
    pub url: String,
    pub baseline: f64,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub auth_bearer: Option<String>,
    pub limiter: Option<Arc<RateLimiter>>,
}

impl TokenSimilarityProvider for RemoteTokenSimilarity {
    fn baseline(&self) -> f64 {
        self.baseline
    }

    fn raw_f1(&self, candidate: &str, reference: &str) -> Result<f64, ProviderError> {
        let body = serde_json::json!({ "candidate": candidate, "reference": reference });
        let reply = post_json(&self.url, self.timeout, &self.retry, self.limiter.as_deref(), self.auth_bearer.as_deref(), &body)?;
        field(&reply, "f1")?
            .as_f64()
            .ok_or_else(|| ProviderError::MalformedResponse("\"f1\" is not a number".into()))
    }

    fn identity(&self) -> String {
        self.url.clone()
    }
}

/// Remote perplexity scorer.
pub struct RemotePerplexity {
    pub url: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub auth_bearer: Option<String>,
    pub limiter: Option<Arc<RateLimiter>>,
}

impl PerplexityProvider for RemotePerplexity {
    fn perplexity(&self, text: &str) -> Result<f64, ProviderError> {
        let body = serde_json::json!({ "text": text });
        let reply = post_json(&self.url, self.timeout, &self.retry, self.limiter.as_deref(), self.auth_bearer.as_deref(), &body)?;
        field(&reply, "perplexity")?
            .as_f64()
            .ok_or_else(|| ProviderError::MalformedResponse("\"perplexity\" is not a number".into()))
    }

    fn identity(&self) -> String {
        self.url.clone()
    }
}
