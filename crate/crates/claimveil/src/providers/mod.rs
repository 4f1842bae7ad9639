//! Uniform abstractions over generative and scoring models.
//!
//! Every model the attack touches (agents, judges, embedder, token scorer,
//! perplexity scorer) is reached through a role-typed binding. Scripted and
//! reference implementations are pure functions of their inputs, so any
//! pipeline wired entirely from them replays deterministically; remote
//! implementations (behind the `remote` feature) speak a small JSON-over-HTTP
//! contract.

mod reference;
#[cfg(feature = "remote")]
mod remote;
mod scripted;

pub use reference::{ExactMatchTokenF1, TrigramEmbedder, UniformPerplexity};
#[cfg(feature = "remote")]
pub use remote::{
    RateLimiter, RemoteChat, RemoteEmbedder, RemotePerplexity, RemoteTokenSimilarity, RetryPolicy,
};
#[cfg(feature = "remote")]
pub(crate) use remote::post_json as post_json_for_detector;
pub use scripted::{ChatRule, ChatScript, ScriptedChat};

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The roles a campaign binds. Each must be bound at most once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderRole {
    AttackerLlm,
    OptimizerLlm,
    SemanticJudge,
    CoherenceJudge,
    SimplifierLlm,
    SentenceEmbedder,
    TokenSimilarity,
    PerplexityScorer,
}

/// One chat completion request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_instructions: String,
    pub user_content: String,
    /// Sampling temperature in `[0, 2]`.
    pub temperature: f64,
    /// Output token budget. [`ChatRequest::DEFAULT_MAX_OUTPUT`] unless a
    /// campaign overrides it.
    pub max_output: u32,
    pub trace_id: String,
}

impl ChatRequest {
    pub const DEFAULT_MAX_OUTPUT: u32 = 1024;

    pub fn new(system: impl Into<String>, user: impl Into<String>, temperature: f64) -> Self {
        let system_instructions = system.into();
        debug_assert!(!system_instructions.is_empty(), "system instructions must be non-empty");
        debug_assert!((0.0..=2.0).contains(&temperature));
        Self {
            system_instructions,
            user_content: user.into(),
            temperature,
            max_output: Self::DEFAULT_MAX_OUTPUT,
            trace_id: String::new(),
        }
    }

    pub fn with_trace(mut self, trace_id: impl Into<String>) -> Self {
        self.trace_id = trace_id.into();
        self
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("embedding dimension mismatch: declared {declared}, got {actual}")]
    DimensionMismatch { declared: usize, actual: usize },
    #[error("text too short: {0}")]
    TextTooShort(String),
    #[error("input text must be non-empty")]
    EmptyInput,
    #[error("no provider bound for role {0:?}")]
    MissingRole(ProviderRole),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
}

/// Generative chat model.
pub trait ChatProvider: Send + Sync {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
    /// Stable identity string recorded in campaign manifests.
    fn identity(&self) -> String;
}

/// Sentence-level embedding model with a fixed output dimension.
pub trait SentenceEmbedderProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
    fn identity(&self) -> String;
}

/// Token-alignment F1 scorer. `raw_f1` is the provider's native score;
/// callers rescale it against [`TokenSimilarityProvider::baseline`].
pub trait TokenSimilarityProvider: Send + Sync {
    /// Baseline `b` for rescaling: `(raw - b) / (1 - b)`. Must be `< 1`.
    fn baseline(&self) -> f64;
    fn raw_f1(&self, candidate: &str, reference: &str) -> Result<f64, ProviderError>;
    fn identity(&self) -> String;
}

/// Language-model perplexity: `exp(mean token negative log-likelihood)`.
pub trait PerplexityProvider: Send + Sync {
    fn perplexity(&self, text: &str) -> Result<f64, ProviderError>;
    fn identity(&self) -> String;
}

/// What a logged call was.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallKind {
    Chat(ProviderRole),
    Embed,
    TokenSimilarity,
    Perplexity,
    DetectorQuery,
}

/// One logged call. Chat calls keep their full prompt content so tests can
/// assert context-construction contracts.
#[derive(Debug, Clone)]
pub struct CallRecord {
    pub kind: CallKind,
    pub trace_id: String,
    pub system: Option<String>,
    pub user: Option<String>,
}

/// Append-only, thread-safe record of every model and detector call.
#[derive(Debug, Default)]
pub struct CallLog {
    records: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, rec: CallRecord) {
        self.records.lock().expect("call log poisoned").push(rec);
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.records.lock().expect("call log poisoned").clone()
    }

    pub fn count(&self, kind: &CallKind) -> usize {
        self.records.lock().expect("call log poisoned").iter().filter(|r| &r.kind == kind).count()
    }
}

/// The per-campaign provider table: one implementation per role, plus the
/// shared call log.
#[derive(Clone)]
pub struct Bindings {
    chat: BTreeMap<ProviderRole, Arc<dyn ChatProvider>>,
    embedder: Option<Arc<dyn SentenceEmbedderProvider>>,
    token_sim: Option<Arc<dyn TokenSimilarityProvider>>,
    perplexity: Option<Arc<dyn PerplexityProvider>>,
    log: Arc<CallLog>,
}

impl Bindings {
    pub fn builder() -> BindingsBuilder {
        BindingsBuilder::default()
    }

    pub fn call_log(&self) -> &Arc<CallLog> {
        &self.log
    }

    /// Identity strings per bound role, for the campaign manifest.
    pub fn identities(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for (role, p) in &self.chat {
            out.insert(format!("{role:?}"), p.identity());
        }
        if let Some(e) = &self.embedder {
            out.insert("SentenceEmbedder".into(), e.identity());
        }
        if let Some(t) = &self.token_sim {
            out.insert("TokenSimilarity".into(), t.identity());
        }
        if let Some(p) = &self.perplexity {
            out.insert("PerplexityScorer".into(), p.identity());
        }
        out
    }

    pub fn has_role(&self, role: ProviderRole) -> bool {
        match role {
            ProviderRole::SentenceEmbedder => self.embedder.is_some(),
            ProviderRole::TokenSimilarity => self.token_sim.is_some(),
            ProviderRole::PerplexityScorer => self.perplexity.is_some(),
            r => self.chat.contains_key(&r),
        }
    }

    pub fn chat(&self, role: ProviderRole, req: &ChatRequest) -> Result<String, ProviderError> {
        let provider = self.chat.get(&role).ok_or(ProviderError::MissingRole(role))?;
        self.log.record(CallRecord {
            kind: CallKind::Chat(role),
            trace_id: req.trace_id.clone(),
            system: Some(req.system_instructions.clone()),
            user: Some(req.user_content.clone()),
        });
        provider.chat_complete(req)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let provider =
            self.embedder.as_ref().ok_or(ProviderError::MissingRole(ProviderRole::SentenceEmbedder))?;
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        self.log.record(CallRecord {
            kind: CallKind::Embed,
            trace_id: String::new(),
            system: None,
            user: Some(text.to_owned()),
        });
        let v = provider.embed(text)?;
        if v.len() != provider.dimension() {
            return Err(ProviderError::DimensionMismatch {
                declared: provider.dimension(),
                actual: v.len(),
            });
        }
        Ok(v)
    }

    /// Rescaled token-alignment F1: `(raw - b) / (1 - b)` with the bound
    /// provider's declared baseline `b`.
    pub fn token_similarity_f1(
        &self,
        candidate: &str,
        reference: &str,
    ) -> Result<f64, ProviderError> {
        let provider =
            self.token_sim.as_ref().ok_or(ProviderError::MissingRole(ProviderRole::TokenSimilarity))?;
        if candidate.is_empty() || reference.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        self.log.record(CallRecord {
            kind: CallKind::TokenSimilarity,
            trace_id: String::new(),
            system: None,
            user: Some(format!("{candidate}\u{1f}{reference}")),
        });
        let raw = provider.raw_f1(candidate, reference)?;
        let b = provider.baseline();
        debug_assert!(b < 1.0, "rescaling baseline must be < 1");
        Ok((raw - b) / (1.0 - b))
    }

    pub fn perplexity(&self, text: &str) -> Result<f64, ProviderError> {
        let provider =
            self.perplexity.as_ref().ok_or(ProviderError::MissingRole(ProviderRole::PerplexityScorer))?;
        self.log.record(CallRecord {
            kind: CallKind::Perplexity,
            trace_id: String::new(),
            system: None,
            user: Some(text.to_owned()),
        });
        provider.perplexity(text)
    }
}

#[derive(Default)]
pub struct BindingsBuilder {
    chat: BTreeMap<ProviderRole, Arc<dyn ChatProvider>>,
    embedder: Option<Arc<dyn SentenceEmbedderProvider>>,
    token_sim: Option<Arc<dyn TokenSimilarityProvider>>,
    perplexity: Option<Arc<dyn PerplexityProvider>>,
    log: Option<Arc<CallLog>>,
}

impl BindingsBuilder {
    pub fn chat(mut self, role: ProviderRole, provider: Arc<dyn ChatProvider>) -> Self {
        assert!(
            matches!(
                role,
                ProviderRole::AttackerLlm
                    | ProviderRole::OptimizerLlm
                    | ProviderRole::SemanticJudge
                    | ProviderRole::CoherenceJudge
                    | ProviderRole::SimplifierLlm
            ),
            "role {role:?} is not a chat role"
        );
        let prior = self.chat.insert(role, provider);
        assert!(prior.is_none(), "role {role:?} bound twice");
        self
    }

    pub fn embedder(mut self, provider: Arc<dyn SentenceEmbedderProvider>) -> Self {
        assert!(self.embedder.is_none(), "embedder bound twice");
        self.embedder = Some(provider);
        self
    }

    pub fn token_similarity(mut self, provider: Arc<dyn TokenSimilarityProvider>) -> Self {
        assert!(self.token_sim.is_none(), "token similarity bound twice");
        self.token_sim = Some(provider);
        self
    }

    pub fn perplexity(mut self, provider: Arc<dyn PerplexityProvider>) -> Self {
        assert!(self.perplexity.is_none(), "perplexity bound twice");
        self.perplexity = Some(provider);
        self
    }

    pub fn call_log(mut self, log: Arc<CallLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn build(self) -> Bindings {
        Bindings {
            chat: self.chat,
            embedder: self.embedder,
            token_sim: self.token_sim,
            perplexity: self.perplexity,
            log: self.log.unwrap_or_default(),
        }
    }
}
