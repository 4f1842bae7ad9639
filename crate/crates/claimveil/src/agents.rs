//! The attacker and prompt-optimizer agents: prompt assembly, context
//! variants, response parsing, and the temperature schedule.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evaluation::strip_code_fences;
use crate::model::{Claim, RewriteAttempt, Variant};
use crate::prompts;
use crate::providers::{Bindings, ChatRequest, ProviderError, ProviderRole};

/// The attacker's current system instructions and where they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSet {
    pub text: String,
    pub origin: InstructionOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionOrigin {
    Initial,
    OptimizedAtIteration(u32),
}

impl InstructionSet {
    /// The shipped initial attacker instructions.
    pub fn initial() -> Self {
        Self { text: prompts::ATTACKER_INITIAL.text.to_owned(), origin: InstructionOrigin::Initial }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("attacker returned an empty rewrite")]
    EmptyRewrite,
    #[error("optimizer context requires at least one prior attempt")]
    EmptyHistory,
    #[error("optimizer returned unparseable output twice")]
    OptimizerParse,
    #[error("optimizer must not run in the attacker-only variant")]
    VariantForbidsOptimizer,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Attacker sampling temperature: 1.0 through iteration 5, then +0.1 per
/// iteration, capped at 1.5.
pub fn temperature_for(iteration: u32) -> f64 {
    assert!(iteration >= 1, "iterations are 1-based");
    // Computed in integer tenths so the schedule is bit-exact.
    let tenths = 10 + iteration.saturating_sub(5).min(5);
    f64::from(tenths) / 10.0
}

/// Drop surrounding whitespace and one or more layers of matching quote
/// wrappers that chat models like to add around a bare answer.
pub fn normalize_reply(raw: &str) -> String {
    let mut s = raw.trim();
    const PAIRS: [(char, char); 4] = [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')];
    loop {
        let mut chars = s.chars();
        let (first, last) = (chars.next(), chars.next_back());
        let wrapped = match (first, last) {
            (Some(f), Some(l)) => PAIRS.iter().any(|&(open, close)| f == open && l == close),
            _ => false,
        };
        if !wrapped {
            break;
        }
        s = s[first.unwrap().len_utf8()..s.len() - last.unwrap().len_utf8()].trim();
    }
    s.to_owned()
}

/// Ask the attacker for one rewrite of `claim` under the given instructions.
pub fn generate_rewrite(
    bindings: &Bindings,
    instructions: &InstructionSet,
    claim: &Claim,
    iteration: u32,
) -> Result<String, AgentError> {
    let req = ChatRequest::new(&instructions.text, &claim.text, temperature_for(iteration))
        .with_trace(format!("{}/i{}/attacker", claim.id, iteration));
    let raw = bindings.chat(ProviderRole::AttackerLlm, &req)?;
    let rewrite = normalize_reply(&raw);
    if rewrite.is_empty() {
        return Err(AgentError::EmptyRewrite);
    }
    Ok(rewrite)
}

/// One attempt as the optimizer sees it. Field names are part of the wire
/// contract between the engine and the optimizer prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: u32,
    pub instructions_snapshot: String,
    pub rewrite: String,
    pub sim_mpnet: f64,
    pub sim_bert: f64,
    pub sem_check: bool,
    pub coherence: bool,
    pub flipped: bool,
}

impl HistoryRecord {
    pub fn from_attempt(attempt: &RewriteAttempt) -> Self {
        Self {
            iteration: attempt.iteration,
            instructions_snapshot: attempt.instructions_snapshot.clone(),
            rewrite: attempt.rewrite_text.clone(),
            sim_mpnet: attempt.evaluation.sim_mpnet,
            sim_bert: attempt.evaluation.sim_bert,
            sem_check: attempt.evaluation.sem_check,
            coherence: attempt.evaluation.coherence,
            flipped: attempt.attack_success,
        }
    }
}

#[derive(Serialize)]
struct OptimizerContext<'a> {
    original_claim: &'a str,
    attempts: Vec<HistoryRecord>,
}

/// Serialize the optimizer's view of the attack so far. `FullHistory` sees
/// every attempt, `PreviousOnly` just the most recent one.
pub fn build_optimizer_context(
    variant: Variant,
    claim: &Claim,
    history: &[RewriteAttempt],
) -> Result<String, AgentError> {
    if history.is_empty() {
        return Err(AgentError::EmptyHistory);
    }
    let attempts: Vec<HistoryRecord> = match variant {
        Variant::FullHistory => history.iter().map(HistoryRecord::from_attempt).collect(),
        Variant::PreviousOnly => vec![HistoryRecord::from_attempt(history.last().unwrap())],
        Variant::AttackerOnly => return Err(AgentError::VariantForbidsOptimizer),
    };
    let context = OptimizerContext { original_claim: &claim.text, attempts };
    Ok(serde_json::to_string_pretty(&context).expect("context serialization cannot fail"))
}

/// The optimizer's structured analysis of the attempt history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerAnalysis {
    #[serde(default)]
    pub diagnosis: String,
    #[serde(default)]
    pub patterns: String,
    #[serde(default)]
    pub tactics: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closest_success: Option<ClosestSuccess>,
}

/// The label-flipping attempt that came closest to passing everything.
/// Absent when no attempt has flipped the label yet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosestSuccess {
    #[serde(default)]
    pub rewrite: String,
    /// LLMs emit this as a number or a string; preserved as-is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Value>,
    #[serde(default)]
    pub improvement_needed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOutput {
    #[serde(default)]
    pub analysis: OptimizerAnalysis,
    pub system_prompt: String,
}

fn parse_optimizer_reply(reply: &str) -> Option<OptimizerOutput> {
    let parsed: OptimizerOutput = serde_json::from_str(strip_code_fences(reply)).ok()?;
    (!parsed.system_prompt.trim().is_empty()).then_some(parsed)
}

const OPTIMIZER_FORMAT_REMINDER: &str = "Your previous reply could not be parsed. Respond with \
only a valid JSON object containing the fields \"analysis\" and \"system_prompt\", exactly as \
specified, and nothing else.";

/// Run the optimizer over the attempt history. On success the returned
/// `system_prompt` becomes the attacker's next instruction set; a parse
/// failure after one corrective re-ask surfaces as
/// [`AgentError::OptimizerParse`], and the engine keeps the previous
/// instructions.
pub fn optimize_instructions(
    bindings: &Bindings,
    claim: &Claim,
    history: &[RewriteAttempt],
    variant: Variant,
) -> Result<OptimizerOutput, AgentError> {
    let context = build_optimizer_context(variant, claim, history)?;
    let iteration = history.last().map_or(0, |a| a.iteration);
    let ask = |content: String, trace: String| -> Result<String, AgentError> {
        // The optimizer holds a constant temperature of 1.0.
        let req = ChatRequest::new(prompts::OPTIMIZER_SYSTEM.text, content, 1.0).with_trace(trace);
        Ok(bindings.chat(ProviderRole::OptimizerLlm, &req)?)
    };
    let trace = format!("{}/i{}/optimizer", claim.id, iteration);
    let first = ask(context.clone(), trace.clone())?;
    if let Some(out) = parse_optimizer_reply(&first) {
        return Ok(out);
    }
    let second = ask(format!("{context}\n\n{OPTIMIZER_FORMAT_REMINDER}"), format!("{trace}/retry"))?;
    parse_optimizer_reply(&second).ok_or(AgentError::OptimizerParse)
}
