//! The claim evaluation module: four constraint signals for an
//! (original, rewrite) pair and the combined accept decision.
//!
//! All four checks run unconditionally (no short-circuiting) because the
//! optimizer's feedback needs every score even when an early check already
//! failed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Claim;
use crate::prompts;
use crate::providers::{Bindings, ChatRequest, ProviderError, ProviderRole};

/// Similarity acceptance thresholds. Comparisons use `>=`, so a score
/// exactly at the threshold passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_mpnet: f64,
    pub tau_bert: f64,
}

impl Thresholds {
    pub fn new(tau_mpnet: f64, tau_bert: f64) -> Result<Self, EvalError> {
        if !(0.0..=1.0).contains(&tau_mpnet) || !(0.0..=1.0).contains(&tau_bert) {
            return Err(EvalError::InvalidThreshold { tau_mpnet, tau_bert });
        }
        Ok(Self { tau_mpnet, tau_bert })
    }
}

impl Default for Thresholds {
    /// The calibrated defaults selected to admit zero false positives on the
    /// human validation set.
    fn default() -> Self {
        Self { tau_mpnet: 0.61, tau_bert: 0.77 }
    }
}

/// The four constraint measurements plus their threshold verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Sentence-embedding cosine similarity, in `[-1, 1]`.
    pub sim_mpnet: f64,
    /// Rescaled token-alignment F1, at most 1.
    pub sim_bert: f64,
    /// Judge verdict: core assertion unchanged.
    pub sem_check: bool,
    /// Judge verdict: grammatical, readable, natural flow.
    pub coherence: bool,
    pub sim_mpnet_pass: bool,
    pub sim_bert_pass: bool,
}

impl EvaluationReport {
    pub fn from_scores(
        sim_mpnet: f64,
        sim_bert: f64,
        sem_check: bool,
        coherence: bool,
        thresholds: &Thresholds,
    ) -> Self {
        Self {
            sim_mpnet,
            sim_bert,
            sem_check,
            coherence,
            sim_mpnet_pass: sim_mpnet >= thresholds.tau_mpnet,
            sim_bert_pass: sim_bert >= thresholds.tau_bert,
        }
    }

    /// All four constraint checks hold (label flip not considered).
    pub fn constraints_pass(&self) -> bool {
        self.sim_mpnet_pass && self.sim_bert_pass && self.sem_check && self.coherence
    }
}

/// Which sub-check an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    MpnetSimilarity,
    BertSimilarity,
    SemanticCheck,
    CoherenceCheck,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("thresholds must lie in [0, 1], got ({tau_mpnet}, {tau_bert})")]
    InvalidThreshold { tau_mpnet: f64, tau_bert: f64 },
    #[error("judge returned unparseable output twice ({check:?})")]
    JudgeParse { check: CheckKind },
    #[error("{check:?} failed: {source}")]
    Provider {
        check: CheckKind,
        #[source]
        source: ProviderError,
    },
    #[error("rewrite text must be non-empty")]
    EmptyRewrite,
}

/// `dot(a, b) / (|a| · |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Strip a markdown code fence (``` or ```json) wrapping, if present.
pub(crate) fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else { return trimmed };
    let Some(rest) = rest.strip_suffix("```") else { return trimmed };
    // Drop a language tag on the opening fence line.
    match rest.split_once('\n') {
        Some((first, body)) if !first.trim().is_empty() && !first.trim().contains(' ') => body.trim(),
        _ => rest.trim(),
    }
}

const JUDGE_FORMAT_REMINDER: &str = "Your previous reply could not be parsed. Respond with only a \
valid JSON object of the form {\"score\": 0 or 1, \"explanation\": \"...\"} and nothing else.";

fn parse_judge_reply(reply: &str) -> Option<bool> {
    let value: serde_json::Value = serde_json::from_str(strip_code_fences(reply)).ok()?;
    let score = value.get("score")?;
    let score = score.as_u64().or_else(|| score.as_str().and_then(|s| s.trim().parse().ok()))?;
    match score {
        0 => Some(false),
        1 => Some(true),
        _ => None,
    }
}

fn run_judge(
    bindings: &Bindings,
    role: ProviderRole,
    check: CheckKind,
    system: &str,
    user: String,
    trace_id: &str,
) -> Result<bool, EvalError> {
    let ask = |content: String, trace: String| -> Result<String, EvalError> {
        // Judges run at the provider's default sampling temperature.
        let req = ChatRequest::new(system, content, 1.0).with_trace(trace);
        bindings.chat(role, &req).map_err(|source| EvalError::Provider { check, source })
    };
    let first = ask(user.clone(), trace_id.to_owned())?;
    if let Some(verdict) = parse_judge_reply(&first) {
        return Ok(verdict);
    }
    // One corrective re-ask with a format reminder, then give up.
    let second = ask(format!("{user}\n\n{JUDGE_FORMAT_REMINDER}"), format!("{trace_id}/retry"))?;
    parse_judge_reply(&second).ok_or(EvalError::JudgeParse { check })
}

/// True iff the judge confirms the rewrite keeps the original's core claim.
pub fn semantic_judge(
    bindings: &Bindings,
    original: &str,
    rewrite: &str,
    trace_id: &str,
) -> Result<bool, EvalError> {
    let user = format!("Original Claim: \"{original}\"\nRewritten Claim: \"{rewrite}\"");
    run_judge(
        bindings,
        ProviderRole::SemanticJudge,
        CheckKind::SemanticCheck,
        prompts::JUDGE_SEMANTIC.text,
        user,
        trace_id,
    )
}

/// True iff the judge confirms the text is grammatical and readable.
pub fn coherence_judge(bindings: &Bindings, text: &str, trace_id: &str) -> Result<bool, EvalError> {
    let user = format!("Rewritten Claim: \"{text}\"");
    run_judge(
        bindings,
        ProviderRole::CoherenceJudge,
        CheckKind::CoherenceCheck,
        prompts::JUDGE_COHERENCE.text,
        user,
        trace_id,
    )
}

/// Compute all four constraint signals for a rewrite of `original`.
///
/// This never touches the victim detector; the label-flip signal reaches the
/// accept decision separately.
pub fn evaluate(
    original: &Claim,
    rewrite_text: &str,
    thresholds: &Thresholds,
    bindings: &Bindings,
    trace_id: &str,
) -> Result<EvaluationReport, EvalError> {
    if rewrite_text.trim().is_empty() {
        return Err(EvalError::EmptyRewrite);
    }
    let tag = |check: CheckKind| move |source: ProviderError| EvalError::Provider { check, source };

    let original_vec = bindings.embed(&original.text).map_err(tag(CheckKind::MpnetSimilarity))?;
    let rewrite_vec = bindings.embed(rewrite_text).map_err(tag(CheckKind::MpnetSimilarity))?;
    let sim_mpnet = cosine_similarity(&rewrite_vec, &original_vec)?;

    let sim_bert = bindings
        .token_similarity_f1(rewrite_text, &original.text)
        .map_err(tag(CheckKind::BertSimilarity))?;

    let sem_check = semantic_judge(bindings, &original.text, rewrite_text, trace_id)?;
    let coherence = coherence_judge(bindings, rewrite_text, trace_id)?;

    Ok(EvaluationReport::from_scores(sim_mpnet, sim_bert, sem_check, coherence, thresholds))
}

/// The full accept decision: every constraint holds and the verdict flipped.
pub fn accept(report: &EvaluationReport, flipped: bool) -> bool {
    report.constraints_pass() && flipped
}
