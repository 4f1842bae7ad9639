//! Black-box detector access: verdict normalization, strict query budgeting,
//! and rate limiting.
//!
//! Nothing outside this module talks to a detector; every query passes
//! through [`Gateway`], which enforces the budget and records the call.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BinaryLabel;
use crate::providers::{CallKind, CallLog, CallRecord};

/// What the detector actually said, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawVerdict {
    True,
    False,
    NotEnoughInfo,
}

/// A raw verdict plus its binary normalization.
///
/// `NotEnoughInfo` is scored as incorrect: the claims in scope are
/// verifiable, so abstention is a detector failure. The raw verdict is kept
/// for transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub raw: RawVerdict,
    pub mapped: BinaryLabel,
}

/// Map a raw verdict against the claim's ground truth. Applied exactly once
/// per response.
pub fn map_verdict(raw: RawVerdict, truth_label: BinaryLabel) -> DetectorVerdict {
    let mapped = match raw {
        RawVerdict::True => BinaryLabel::True,
        RawVerdict::False => BinaryLabel::False,
        RawVerdict::NotEnoughInfo => truth_label.flip(),
    };
    DetectorVerdict { raw, mapped }
}

/// Per-attack victim query budget. `used <= limit` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBudget {
    pub limit: u32,
    pub used: u32,
}

impl QueryBudget {
    pub const DEFAULT_LIMIT: u32 = 10;

    pub fn new(limit: u32) -> Self {
        assert!(limit >= 1, "budget limit must be positive");
        Self { limit, used: 0 }
    }

    pub fn remaining(&self) -> u32 {
        self.limit - self.used
    }
}

impl Default for QueryBudget {
    fn default() -> Self {
        Self::new(Self::DEFAULT_LIMIT)
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("query budget exhausted ({limit} queries)")]
    BudgetExhausted { limit: u32 },
    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),
}

/// A black-box detector: claim text in, raw verdict out.
pub trait Detector: Send + Sync {
    fn verdict(&self, claim_text: &str) -> Result<RawVerdict, GatewayError>;
    fn identity(&self) -> String;
}

/// Deterministic detector driven by a pattern table.
///
/// Exact-match keys take precedence over substring keys; substring keys are
/// tried longest-first (ties lexicographic); otherwise the default applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedDetector {
    #[serde(default)]
    pub exact: BTreeMap<String, RawVerdict>,
    #[serde(default)]
    pub substring: BTreeMap<String, RawVerdict>,
    pub default: RawVerdict,
}

impl ScriptedDetector {
    pub fn constant(default: RawVerdict) -> Self {
        Self { exact: BTreeMap::new(), substring: BTreeMap::new(), default }
    }

    pub fn with_substring(mut self, pattern: impl Into<String>, verdict: RawVerdict) -> Self {
        self.substring.insert(pattern.into(), verdict);
        self
    }

    pub fn with_exact(mut self, text: impl Into<String>, verdict: RawVerdict) -> Self {
        self.exact.insert(text.into(), verdict);
        self
    }
}

impl Detector for ScriptedDetector {
    fn verdict(&self, claim_text: &str) -> Result<RawVerdict, GatewayError> {
        if let Some(&v) = self.exact.get(claim_text) {
            return Ok(v);
        }
        let mut candidates: Vec<(&String, &RawVerdict)> = self.substring.iter().collect();
        candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        for (pattern, &v) in candidates {
            if claim_text.contains(pattern.as_str()) {
                return Ok(v);
            }
        }
        Ok(self.default)
    }

    fn identity(&self) -> String {
        format!("script:detector({} exact, {} substring)", self.exact.len(), self.substring.len())
    }
}

/// The single entry point for detector queries.
pub struct Gateway {
    detector: Arc<dyn Detector>,
    log: Arc<CallLog>,
}

impl Gateway {
    pub fn new(detector: Arc<dyn Detector>, log: Arc<CallLog>) -> Self {
        Self { detector, log }
    }

    pub fn detector_identity(&self) -> String {
        self.detector.identity()
    }

    fn query(&self, claim_text: &str, trace_id: &str) -> Result<RawVerdict, GatewayError> {
        self.log.record(CallRecord {
            kind: CallKind::DetectorQuery,
            trace_id: trace_id.to_owned(),
            system: None,
            user: Some(claim_text.to_owned()),
        });
        self.detector.verdict(claim_text)
    }

    /// One budgeted classification. Consumes exactly one unit of budget on a
    /// delivered verdict; a transport failure consumes nothing (the failed
    /// query is still logged).
    pub fn classify(
        &self,
        claim_text: &str,
        budget: &mut QueryBudget,
        truth_label: BinaryLabel,
        trace_id: &str,
    ) -> Result<DetectorVerdict, GatewayError> {
        if budget.used >= budget.limit {
            return Err(GatewayError::BudgetExhausted { limit: budget.limit });
        }
        let raw = self.query(claim_text, trace_id)?;
        budget.used += 1;
        Ok(map_verdict(raw, truth_label))
    }

    /// Budget-exempt classification, for the baseline pass and the defense
    /// harness (both sit outside attack budgets).
    pub fn classify_unbudgeted(
        &self,
        claim_text: &str,
        truth_label: BinaryLabel,
        trace_id: &str,
    ) -> Result<DetectorVerdict, GatewayError> {
        let raw = self.query(claim_text, trace_id)?;
        Ok(map_verdict(raw, truth_label))
    }
}

#[cfg(feature = "remote")]
pub use self::remote_detector::{DetectorAdapterConfig, RemoteDetector};
#[cfg(feature = "remote")]
pub use crate::providers::RateLimiter;

#[cfg(feature = "remote")]
mod remote_detector {
    use std::time::Duration;

    use serde::{Deserialize, Serialize};
    use serde_json::Value;

    use super::{Detector, GatewayError, RawVerdict};
    use crate::providers::{ProviderError, RateLimiter, RetryPolicy};

    /// Adapter configuration for a live detector endpoint: where to POST,
    /// which env var holds the bearer token, and how to translate the
    /// response verdict field.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct DetectorAdapterConfig {
        pub endpoint: String,
        #[serde(default)]
        pub auth_env: Option<String>,
        /// Response field holding the verdict string (default `"verdict"`).
        #[serde(default = "default_verdict_field")]
        pub verdict_field: String,
        /// Lowercased response token -> normalized raw verdict.
        #[serde(default)]
        pub verdict_map: std::collections::BTreeMap<String, RawVerdict>,
        #[serde(default = "default_timeout_ms")]
        pub timeout_ms: u64,
        #[serde(default)]
        pub max_attempts: Option<u32>,
    }

    fn default_verdict_field() -> String {
        "verdict".into()
    }

    fn default_timeout_ms() -> u64 {
        30_000
    }

    /// Live detector speaking the normalized `{claim}` -> `{verdict}` JSON
    /// contract, rate limited and retried.
    pub struct RemoteDetector {
        config: DetectorAdapterConfig,
        retry: RetryPolicy,
        auth_bearer: Option<String>,
        limiter: Option<std::sync::Arc<RateLimiter>>,
    }

    impl RemoteDetector {
        pub fn new(config: DetectorAdapterConfig, limiter: Option<std::sync::Arc<RateLimiter>>) -> Self {
            let auth_bearer = config.auth_env.as_ref().and_then(|name| std::env::var(name).ok());
            let retry = RetryPolicy {
                max_attempts: config.max_attempts.unwrap_or(3),
                ..RetryPolicy::default()
            };
            Self { config, retry, auth_bearer, limiter }
        }

        fn translate(&self, token: &str) -> Result<RawVerdict, GatewayError> {
            let lc = token.trim().to_lowercase();
            if let Some(&v) = self.config.verdict_map.get(&lc) {
                return Ok(v);
            }
            match lc.as_str() {
                "true" | "supported" => Ok(RawVerdict::True),
                "false" | "refuted" => Ok(RawVerdict::False),
                "not_enough_info" | "nei" | "unknown" => Ok(RawVerdict::NotEnoughInfo),
                other => Err(GatewayError::DetectorUnavailable(format!(
                    "unmapped verdict token {other:?}"
                ))),
            }
        }
    }

    impl Detector for RemoteDetector {
        fn verdict(&self, claim_text: &str) -> Result<RawVerdict, GatewayError> {
            let body = serde_json::json!({ "claim": claim_text });
            let reply = crate::providers::post_json_for_detector(
                &self.config.endpoint,
                Duration::from_millis(self.config.timeout_ms),
                &self.retry,
                self.limiter.as_deref(),
                self.auth_bearer.as_deref(),
                &body,
            )
            .map_err(|e: ProviderError| GatewayError::DetectorUnavailable(e.to_string()))?;
            let token = reply
                .get(&self.config.verdict_field)
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    GatewayError::DetectorUnavailable(format!(
                        "response missing string field {:?}",
                        self.config.verdict_field
                    ))
                })?;
            self.translate(token)
        }

        fn identity(&self) -> String {
            self.config.endpoint.clone()
        }
    }
}
