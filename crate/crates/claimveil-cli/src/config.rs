//! Declarative campaign configuration: schema, validation, and construction
//! of the provider bindings and detector gateway.
//!
//! A config file is JSON. Secrets never appear inline; remote specs name an
//! environment variable holding the bearer token.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use claimveil::engine::CampaignConfig;
use claimveil::evaluation::Thresholds;
use claimveil::model::{ClaimFormat, SampleOrder, Variant, Verifiability};
use claimveil::providers::{
    Bindings, CallLog, ExactMatchTokenF1, ProviderRole, RemoteChat, RemoteEmbedder,
    RemotePerplexity, RemoteTokenSimilarity, RetryPolicy, ScriptedChat, TrigramEmbedder,
    UniformPerplexity,
};
use claimveil::victim::{
    DetectorAdapterConfig, Gateway, RateLimiter, RemoteDetector, ScriptedDetector,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileConfig {
    pub campaign_id: String,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    pub variant: Variant,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub skip_victim_when_constraints_fail: bool,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderSpec>,
    #[serde(default)]
    pub detector: Option<DetectorSpec>,
    /// Annotation file (JSON lines of annotated pairs) for `calibrate`.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_budget() -> u32 {
    10
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: ClaimFormat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingConfig {
    #[serde(default)]
    pub exclude: Vec<Verifiability>,
    /// Sample size; absent means the whole (filtered) dataset.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub order: SampleOrder,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            exclude: vec![Verifiability::Impossible],
            n: None,
            seed: 0,
            order: SampleOrder::FilterThenSample,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CalibrationConfig {
    /// When set, stratified-sample the annotation pool before the search.
    #[serde(default)]
    pub per_bin: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(default = "default_tfidf_k")]
    pub tfidf_k: usize,
}

fn default_tfidf_k() -> usize {
    10
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { tfidf_k: default_tfidf_k() }
    }
}

/// One provider binding. `script:` forms are offline and deterministic;
/// `remote` speaks the JSON-over-HTTP contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderSpec {
    Script(ScriptedChat),
    TrigramEmbedder {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    ExactMatchF1,
    UniformPerplexity {
        vocab_size: u32,
    },
    Remote(RemoteSpec),
}

fn default_dimension() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteSpec {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub auth_env: Option<String>,
    /// Required for a remote embedder.
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Rescaling baseline for a remote token-similarity scorer.
    #[serde(default)]
    pub baseline: Option<f64>,
    /// Request rate cap for this binding, per second.
    #[serde(default)]
    pub rate_per_sec: Option<f64>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

impl RemoteSpec {
    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            backoff_base: Duration::from_millis(self.backoff_ms),
        }
    }

    fn auth(&self) -> Option<String> {
        self.auth_env.as_ref().and_then(|name| std::env::var(name).ok())
    }

    fn limiter(&self) -> Option<Arc<claimveil::providers::RateLimiter>> {
        self.rate_per_sec.map(|r| Arc::new(claimveil::providers::RateLimiter::new(r)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub id: String,
    #[serde(default)]
    pub script: Option<ScriptedDetector>,
    #[serde(default)]
    pub adapter: Option<DetectorAdapterConfig>,
    /// Request rate cap for live adapters, per second.
    #[serde(default)]
    pub rate_per_sec: Option<f64>,
}

/// The roles a subcommand needs bound.
pub fn required_roles(command: &str, variant: Variant) -> Vec<&'static str> {
    match command {
        "attack" => {
            let mut roles = vec!["attacker", "semantic_judge", "coherence_judge", "embedder", "token_similarity"];
            if variant != Variant::AttackerOnly {
                roles.push("optimizer");
            }
            roles
        }
        "defend" => vec!["simplifier"],
        "analyze" => vec!["token_similarity", "perplexity"],
        _ => vec![],
    }
}

impl FileConfig {
    pub fn validate_for(&self, command: &str) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if self.campaign_id.trim().is_empty() {
            problems.push("campaign_id must be non-empty".to_owned());
        }
        if self.budget < 1 {
            problems.push("budget must be >= 1".to_owned());
        }
        if !(0.0..=1.0).contains(&self.thresholds.tau_mpnet)
            || !(0.0..=1.0).contains(&self.thresholds.tau_bert)
        {
            problems.push("thresholds must lie in [0, 1]".to_owned());
        }
        for role in required_roles(command, self.variant) {
            if !self.providers.contains_key(role) {
                problems.push(format!("providers.{role} is missing"));
            }
        }
        if matches!(command, "attack" | "defend") {
            match &self.detector {
                None => problems.push("detector is missing".to_owned()),
                Some(d) if d.script.is_none() && d.adapter.is_none() => {
                    problems.push("detector needs either a script table or a remote adapter".to_owned())
                }
                _ => {}
            }
        }
        if command == "attack" && self.dataset.is_none() {
            problems.push("dataset is missing".to_owned());
        }
        if command == "calibrate" && self.annotations.is_none() {
            problems.push("annotations path is missing".to_owned());
        }
        for (role, spec) in &self.providers {
            if let Err(msg) = check_spec_shape(role, spec) {
                problems.push(msg);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    /// Build the provider bindings for the roles the command needs.
    pub fn build_bindings(&self, command: &str, log: Arc<CallLog>) -> Result<Bindings, CliError> {
        let mut builder = Bindings::builder().call_log(log);
        for role in required_roles(command, self.variant) {
            let spec = self.providers.get(role).expect("validated");
            builder = match role {
                "attacker" => builder.chat(ProviderRole::AttackerLlm, chat_provider(spec)?),
                "optimizer" => builder.chat(ProviderRole::OptimizerLlm, chat_provider(spec)?),
                "semantic_judge" => builder.chat(ProviderRole::SemanticJudge, chat_provider(spec)?),
                "coherence_judge" => builder.chat(ProviderRole::CoherenceJudge, chat_provider(spec)?),
                "simplifier" => builder.chat(ProviderRole::SimplifierLlm, chat_provider(spec)?),
                "embedder" => builder.embedder(embedder_provider(spec)?),
                "token_similarity" => builder.token_similarity(token_provider(spec)?),
                "perplexity" => builder.perplexity(perplexity_provider(spec)?),
                other => unreachable!("unknown role {other}"),
            };
        }
        Ok(builder.build())
    }

    pub fn build_gateway(&self, log: Arc<CallLog>) -> Result<Gateway, CliError> {
        let spec = self.detector.as_ref().expect("validated");
        if let Some(script) = &spec.script {
            return Ok(Gateway::new(Arc::new(script.clone()), log));
        }
        let adapter = spec.adapter.as_ref().expect("validated");
        let limiter = spec.rate_per_sec.map(|r| Arc::new(RateLimiter::new(r)));
        Ok(Gateway::new(Arc::new(RemoteDetector::new(adapter.clone(), limiter)), log))
    }

    pub fn campaign_config(&self) -> CampaignConfig {
        CampaignConfig {
            campaign_id: self.campaign_id.clone(),
            variant: self.variant,
            thresholds: self.thresholds,
            budget_limit: self.budget,
            seed: self.sampling.seed,
            parallelism: self.parallelism,
            skip_victim_on_constraint_failure: self.skip_victim_when_constraints_fail,
        }
    }
}

fn check_spec_shape(role: &str, spec: &ProviderSpec) -> Result<(), String> {
    let chat_roles = ["attacker", "optimizer", "semantic_judge", "coherence_judge", "simplifier"];
    match spec {
        ProviderSpec::Script(_) if chat_roles.contains(&role) => Ok(()),
        ProviderSpec::Script(_) => Err(format!("providers.{role}: script chat cannot serve a scoring role")),
        ProviderSpec::TrigramEmbedder { .. } if role == "embedder" => Ok(()),
        ProviderSpec::ExactMatchF1 if role == "token_similarity" => Ok(()),
        ProviderSpec::UniformPerplexity { .. } if role == "perplexity" => Ok(()),
        ProviderSpec::Remote(r) if role == "embedder" && r.dimension.is_none() => {
            Err(format!("providers.{role}: remote embedder needs a declared dimension"))
        }
        ProviderSpec::Remote(_) => Ok(()),
        other => Err(format!("providers.{role}: spec {other:?} does not fit the role")),
    }
}

fn wrong_spec(role: &str) -> CliError {
    CliError::Config(vec![format!("providers.{role}: spec does not fit the role")])
}

fn chat_provider(spec: &ProviderSpec) -> Result<Arc<dyn claimveil::providers::ChatProvider>, CliError> {
    match spec {
        ProviderSpec::Script(s) => Ok(Arc::new(s.clone())),
        ProviderSpec::Remote(r) => Ok(Arc::new(RemoteChat {
            url: r.url.clone(),
            timeout: Duration::from_millis(r.timeout_ms),
            retry: r.retry(),
            auth_bearer: r.auth(),
            limiter: r.limiter(),
        })),
        _ => Err(wrong_spec("chat")),
    }
}

fn embedder_provider(
    spec: &ProviderSpec,
) -> Result<Arc<dyn claimveil::providers::SentenceEmbedderProvider>, CliError> {
    match spec {
        ProviderSpec::TrigramEmbedder { dimension } => Ok(Arc::new(TrigramEmbedder::new(*dimension))),
        ProviderSpec::Remote(r) => Ok(Arc::new(RemoteEmbedder {
            url: r.url.clone(),
            dimension: r.dimension.ok_or_else(|| wrong_spec("embedder"))?,
            timeout: Duration::from_millis(r.timeout_ms),
            retry: r.retry(),
            auth_bearer: r.auth(),
            limiter: r.limiter(),
        })),
        _ => Err(wrong_spec("embedder")),
    }
}

fn token_provider(
    spec: &ProviderSpec,
) -> Result<Arc<dyn claimveil::providers::TokenSimilarityProvider>, CliError> {
    match spec {
        ProviderSpec::ExactMatchF1 => Ok(Arc::new(ExactMatchTokenF1)),
        ProviderSpec::Remote(r) => Ok(Arc::new(RemoteTokenSimilarity {
            url: r.url.clone(),
            baseline: r.baseline.unwrap_or(0.0),
            timeout: Duration::from_millis(r.timeout_ms),
            retry: r.retry(),
            auth_bearer: r.auth(),
            limiter: r.limiter(),
        })),
        _ => Err(wrong_spec("token_similarity")),
    }
}

fn perplexity_provider(
    spec: &ProviderSpec,
) -> Result<Arc<dyn claimveil::providers::PerplexityProvider>, CliError> {
    match spec {
        ProviderSpec::UniformPerplexity { vocab_size } => Ok(Arc::new(UniformPerplexity::new(*vocab_size))),
        ProviderSpec::Remote(r) => Ok(Arc::new(RemotePerplexity {
            url: r.url.clone(),
            timeout: Duration::from_millis(r.timeout_ms),
            retry: r.retry(),
            auth_bearer: r.auth(),
            limiter: r.limiter(),
        })),
        _ => Err(wrong_spec("perplexity")),
    }
}

/// Parse a config file and apply `--set key.path=value` overrides before
/// deserialization.
pub fn load_config(path: &PathBuf, overrides: &[String]) -> Result<FileConfig, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::Config(vec![format!("config is not valid JSON: {e}")]))?;

    for item in overrides {
        let (key, val) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(vec![format!("override {item:?} is not key=value")]))?;
        let parsed: serde_json::Value =
            serde_json::from_str(val).unwrap_or(serde_json::Value::String(val.to_owned()));
        let mut cursor = &mut value;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            cursor = cursor
                .as_object_mut()
                .ok_or_else(|| CliError::Config(vec![format!("override path {key:?} crosses a non-object")]))?
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        cursor
            .as_object_mut()
            .ok_or_else(|| CliError::Config(vec![format!("override path {key:?} crosses a non-object")]))?
            .insert(parts[parts.len() - 1].to_owned(), parsed);
    }

    let mut config: FileConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Config(vec![format!("config does not match the schema: {e}")]))?;

    // Relative dataset/annotation paths are resolved against the config
    // file's directory, so invocations work from any working directory.
    let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    if let Some(dataset) = &mut config.dataset {
        if dataset.path.is_relative() {
            dataset.path = base.join(&dataset.path);
        }
    }
    if let Some(annotations) = &mut config.annotations {
        if annotations.is_relative() {
            *annotations = base.join(&annotations);
        }
    }
    Ok(config)
}
