//! The iterative attack loop, campaign orchestration, success accounting,
//! and transcript persistence.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    generate_rewrite, optimize_instructions, temperature_for, AgentError, InstructionOrigin,
    InstructionSet,
};
use crate::evaluation::{accept, evaluate, Thresholds};
use crate::model::{AttackStatus, AttackTranscript, Claim, RewriteAttempt, Variant};
use crate::providers::Bindings;
use crate::rng::RNG_ALGORITHM;
use crate::victim::{Gateway, QueryBudget};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no baseline-correct claims to score")]
    EmptyBaseline,
    #[error("budget limit must be >= 1")]
    InvalidBudget,
    #[error("transcript stream malformed at line {line}: {reason}")]
    MalformedTranscript { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Static configuration for one campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub variant: Variant,
    pub thresholds: Thresholds,
    pub budget_limit: u32,
    pub seed: u64,
    pub parallelism: usize,
    /// Cost-saving mode: skip the victim query when a constraint already
    /// failed this iteration. Off by default: the optimizer's feedback
    /// tracks label-flip status per attempt, which needs the query.
    #[serde(default)]
    pub skip_victim_on_constraint_failure: bool,
}

impl CampaignConfig {
    pub fn new(campaign_id: impl Into<String>, variant: Variant) -> Self {
        Self {
            campaign_id: campaign_id.into(),
            variant,
            thresholds: Thresholds::default(),
            budget_limit: QueryBudget::DEFAULT_LIMIT,
            seed: 0,
            parallelism: 1,
            skip_victim_on_constraint_failure: false,
        }
    }
}

/// Everything one attack needs besides the claim.
pub struct AttackContext<'a> {
    pub bindings: &'a Bindings,
    pub gateway: &'a Gateway,
    pub thresholds: Thresholds,
    pub variant: Variant,
    pub budget_limit: u32,
    pub skip_victim_on_constraint_failure: bool,
}

impl<'a> AttackContext<'a> {
    pub fn new(config: &CampaignConfig, bindings: &'a Bindings, gateway: &'a Gateway) -> Self {
        Self {
            bindings,
            gateway,
            thresholds: config.thresholds,
            variant: config.variant,
            budget_limit: config.budget_limit,
            skip_victim_on_constraint_failure: config.skip_victim_on_constraint_failure,
        }
    }
}

/// Run the iterative rewrite loop for one claim.
///
/// Each iteration: generate a rewrite under the current instructions,
/// compute all four constraint signals, query the victim (one budget unit),
/// and accept iff everything holds and the verdict flipped. On a failed
/// iteration before the last, the optimizer refines the instructions
/// (except in the attacker-only variant). Unrecoverable attacker, evaluator,
/// or detector failures abort the attack; optimizer failures fall back to
/// the previous instructions; the budget is the only terminator.
pub fn run_attack(claim: &Claim, ctx: &AttackContext) -> AttackTranscript {
    let mut instructions = InstructionSet::initial();
    let mut budget = QueryBudget::new(ctx.budget_limit);
    let mut attempts: Vec<RewriteAttempt> = Vec::new();
    let mut notes: Vec<String> = Vec::new();

    let finish = |attempts: Vec<RewriteAttempt>,
                  status: AttackStatus,
                  queries_used: u32,
                  notes: Vec<String>| AttackTranscript {
        claim: claim.clone(),
        attempts,
        status,
        queries_used,
        variant: ctx.variant,
        notes,
    };

    for iteration in 1..=ctx.budget_limit {
        let trace = format!("{}/i{}", claim.id, iteration);
        let temperature = temperature_for(iteration);

        let rewrite = match generate_rewrite(ctx.bindings, &instructions, claim, iteration) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("aborted at iteration {iteration}: attacker: {e}"));
                return finish(attempts, AttackStatus::Aborted(iteration), budget.used, notes);
            }
        };

        let report = match evaluate(claim, &rewrite, &ctx.thresholds, ctx.bindings, &trace) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("aborted at iteration {iteration}: evaluation: {e}"));
                return finish(attempts, AttackStatus::Aborted(iteration), budget.used, notes);
            }
        };

        let skip_query = ctx.skip_victim_on_constraint_failure && !report.constraints_pass();
        let (detector_raw, detector_verdict, flipped) = if skip_query {
            (None, None, false)
        } else {
            match ctx.gateway.classify(&rewrite, &mut budget, claim.truth_label, &trace) {
                Ok(v) => (Some(v.raw), Some(v.mapped), v.mapped != claim.truth_label),
                Err(e) => {
                    notes.push(format!("aborted at iteration {iteration}: detector: {e}"));
                    return finish(attempts, AttackStatus::Aborted(iteration), budget.used, notes);
                }
            }
        };

        attempts.push(RewriteAttempt {
            iteration,
            rewrite_text: rewrite,
            evaluation: report.clone(),
            detector_raw,
            detector_verdict,
            attack_success: flipped,
            temperature_used: temperature,
            instructions_snapshot: instructions.text.clone(),
        });

        if accept(&report, flipped) {
            return finish(attempts, AttackStatus::Succeeded(iteration), budget.used, notes);
        }

        // Refine instructions for the next iteration; skipped after the
        // final one since no further rewrite happens.
        if iteration < ctx.budget_limit && ctx.variant != Variant::AttackerOnly {
            match optimize_instructions(ctx.bindings, claim, &attempts, ctx.variant) {
                Ok(out) => {
                    instructions = InstructionSet {
                        text: out.system_prompt,
                        origin: InstructionOrigin::OptimizedAtIteration(iteration),
                    };
                }
                Err(AgentError::OptimizerParse) => {
                    notes.push(format!(
                        "optimizer parse failure after iteration {iteration}; retained previous instructions"
                    ));
                }
                Err(e) => {
                    notes.push(format!(
                        "optimizer unavailable after iteration {iteration} ({e}); retained previous instructions"
                    ));
                }
            }
        }
    }

    let used = budget.used;
    finish(attempts, AttackStatus::ExhaustedBudget, used, notes)
}

/// Classify every claim once, outside any attack budget. Returns the ids the
/// detector got right and the ids left unscored by detector errors.
pub fn baseline_pass(claims: &[Claim], gateway: &Gateway) -> (BTreeSet<String>, Vec<String>) {
    let mut correct = BTreeSet::new();
    let mut unscored = Vec::new();
    for claim in claims {
        let trace = format!("baseline/{}", claim.id);
        match gateway.classify_unbudgeted(&claim.text, claim.truth_label, &trace) {
            Ok(v) if v.mapped == claim.truth_label => {
                correct.insert(claim.id.clone());
            }
            Ok(_) => {}
            Err(_) => unscored.push(claim.id.clone()),
        }
    }
    (correct, unscored)
}

fn eligible(transcripts: &[AttackTranscript]) -> impl Iterator<Item = &AttackTranscript> {
    transcripts.iter().filter(|t| !matches!(t.status, AttackStatus::Aborted(_)))
}

/// Percentage of transcripts (already restricted to baseline-correct claims)
/// that ended in success. Aborted transcripts count in neither the numerator
/// nor the denominator.
pub fn attack_success_rate(transcripts: &[AttackTranscript]) -> Result<f64, EngineError> {
    let total = eligible(transcripts).count();
    if total == 0 {
        return Err(EngineError::EmptyBaseline);
    }
    let succeeded =
        eligible(transcripts).filter(|t| matches!(t.status, AttackStatus::Succeeded(_))).count();
    Ok(100.0 * succeeded as f64 / total as f64)
}

/// Entry `k` (1-based) is the success rate counting only attacks that
/// succeeded within the first `k` iterations: the curve a larger query
/// budget would have traced.
pub fn cumulative_success_by_iteration(
    transcripts: &[AttackTranscript],
    budget_limit: u32,
) -> Vec<f64> {
    let total = eligible(transcripts).count();
    let mut curve = vec![0.0; budget_limit as usize];
    if total == 0 {
        return curve;
    }
    let mut by_iteration = vec![0usize; budget_limit as usize + 1];
    for t in eligible(transcripts) {
        if let AttackStatus::Succeeded(k) = t.status {
            if (k as usize) < by_iteration.len() {
                by_iteration[k as usize] += 1;
            }
        }
    }
    let mut running = 0usize;
    for k in 1..=budget_limit as usize {
        running += by_iteration[k];
        curve[k - 1] = 100.0 * running as f64 / total as f64;
    }
    curve
}

/// Aggregate outcome of a campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignResult {
    pub transcripts: Vec<AttackTranscript>,
    pub baseline_correct_ids: BTreeSet<String>,
    pub unscored_ids: Vec<String>,
    pub aborted_ids: Vec<String>,
    /// Success rate over baseline-correct, non-aborted attacks (percent).
    pub asr: f64,
    /// Length equals the budget limit; final entry equals `asr`.
    pub cumulative_asr: Vec<f64>,
}

/// Summary without the transcripts, for the campaign result artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub attacked: usize,
    pub succeeded: usize,
    pub asr: f64,
    pub cumulative_asr: Vec<f64>,
    pub baseline_correct_ids: Vec<String>,
    pub unscored_ids: Vec<String>,
    pub aborted_ids: Vec<String>,
}

impl CampaignResult {
    pub fn summary(&self) -> CampaignSummary {
        CampaignSummary {
            attacked: self.transcripts.len(),
            succeeded: self
                .transcripts
                .iter()
                .filter(|t| matches!(t.status, AttackStatus::Succeeded(_)))
                .count(),
            asr: self.asr,
            cumulative_asr: self.cumulative_asr.clone(),
            baseline_correct_ids: self.baseline_correct_ids.iter().cloned().collect(),
            unscored_ids: self.unscored_ids.clone(),
            aborted_ids: self.aborted_ids.clone(),
        }
    }
}

/// Run a full campaign: baseline pass, then attacks against every claim the
/// detector originally classified correctly (success is only defined
/// relative to a correct baseline). Worker-pool order never affects output
/// order.
pub fn run_campaign(
    claims: &[Claim],
    config: &CampaignConfig,
    bindings: &Bindings,
    gateway: &Gateway,
) -> Result<CampaignResult, EngineError> {
    if config.budget_limit < 1 {
        return Err(EngineError::InvalidBudget);
    }
    let (baseline_correct_ids, unscored_ids) = baseline_pass(claims, gateway);
    let targets: Vec<&Claim> =
        claims.iter().filter(|c| baseline_correct_ids.contains(&c.id)).collect();

    let ctx = AttackContext::new(config, bindings, gateway);
    let transcripts = run_attacks(&targets, &ctx, config.parallelism);

    let aborted_ids: Vec<String> = transcripts
        .iter()
        .filter(|t| matches!(t.status, AttackStatus::Aborted(_)))
        .map(|t| t.claim.id.clone())
        .collect();
    let asr = match attack_success_rate(&transcripts) {
        Ok(v) => v,
        Err(EngineError::EmptyBaseline) => 0.0,
        Err(e) => return Err(e),
    };
    let cumulative_asr = cumulative_success_by_iteration(&transcripts, config.budget_limit);

    Ok(CampaignResult {
        transcripts,
        baseline_correct_ids,
        unscored_ids,
        aborted_ids,
        asr,
        cumulative_asr,
    })
}

/// Resume helper: attack only the targets without a terminal transcript yet.
pub fn run_attacks(claims: &[&Claim], ctx: &AttackContext, parallelism: usize) -> Vec<AttackTranscript> {
    run_attacks_with_sink(claims, ctx, parallelism, &mut |_| Ok(()))
        .expect("no-op sink cannot fail")
}

/// Run attacks over a bounded worker pool, handing each finished transcript
/// to `sink` in claim order (regardless of completion order), so callers can
/// persist progress incrementally. A sink error stops further sink calls and
/// surfaces after the pool drains.
pub fn run_attacks_with_sink(
    claims: &[&Claim],
    ctx: &AttackContext,
    parallelism: usize,
    sink: &mut dyn FnMut(&AttackTranscript) -> Result<(), EngineError>,
) -> Result<Vec<AttackTranscript>, EngineError> {
    if parallelism <= 1 || claims.len() <= 1 {
        let mut out = Vec::with_capacity(claims.len());
        for claim in claims {
            let transcript = run_attack(claim, ctx);
            sink(&transcript)?;
            out.push(transcript);
        }
        return Ok(out);
    }

    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<AttackTranscript>> = claims.iter().map(|_| None).collect();
    let (tx, rx) = std::sync::mpsc::channel::<(usize, AttackTranscript)>();
    let sink_result = std::thread::scope(|scope| {
        for _ in 0..parallelism.min(claims.len()) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= claims.len() {
                    break;
                }
                let transcript = run_attack(claims[i], ctx);
                if tx.send((i, transcript)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut cursor = 0usize;
        let mut failure: Option<EngineError> = None;
        for (i, transcript) in rx {
            slots[i] = Some(transcript);
            while cursor < slots.len() && slots[cursor].is_some() {
                if failure.is_none() {
                    if let Err(e) = sink(slots[cursor].as_ref().expect("just filled")) {
                        failure = Some(e);
                    }
                }
                cursor += 1;
            }
        }
        failure
    });
    if let Some(e) = sink_result {
        return Err(e);
    }
    Ok(slots.into_iter().map(|s| s.expect("pool drained every slot")).collect())
}

// ---------------------------------------------------------------------------
// Persistence: transcripts as JSON lines, one object per attempt, plus a
// terminal summary line per claim; the manifest ties a run to its exact
// configuration, seed, prompt checksums, and provider identities.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TranscriptLine {
    Attempt {
        claim_id: String,
        #[serde(flatten)]
        attempt: RewriteAttempt,
    },
    Summary {
        claim: Claim,
        status: AttackStatus,
        queries_used: u32,
        variant: Variant,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        notes: Vec<String>,
    },
}

/// Serialize one transcript as JSON lines: its attempts in order, then its
/// summary line. Output is byte-stable for identical inputs.
pub fn write_transcript_lines<W: Write>(
    mut out: W,
    t: &AttackTranscript,
) -> Result<(), EngineError> {
    for attempt in &t.attempts {
        let line =
            TranscriptLine::Attempt { claim_id: t.claim.id.clone(), attempt: attempt.clone() };
        serde_json::to_writer(&mut out, &line).map_err(io_other)?;
        out.write_all(b"\n")?;
    }
    let line = TranscriptLine::Summary {
        claim: t.claim.clone(),
        status: t.status,
        queries_used: t.queries_used,
        variant: t.variant,
        notes: t.notes.clone(),
    };
    serde_json::to_writer(&mut out, &line).map_err(io_other)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// [`write_transcript_lines`] over a whole campaign.
pub fn write_transcripts<W: Write>(
    mut out: W,
    transcripts: &[AttackTranscript],
) -> Result<(), EngineError> {
    for t in transcripts {
        write_transcript_lines(&mut out, t)?;
    }
    Ok(())
}

fn io_other(e: serde_json::Error) -> EngineError {
    EngineError::Io(std::io::Error::other(e))
}

/// Rebuild transcripts from a JSON-lines stream written by
/// [`write_transcripts`].
pub fn read_transcripts<R: BufRead>(input: R) -> Result<Vec<AttackTranscript>, EngineError> {
    let mut transcripts = Vec::new();
    let mut pending: Vec<(String, RewriteAttempt)> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine =
            serde_json::from_str(&line).map_err(|e| EngineError::MalformedTranscript {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        match parsed {
            TranscriptLine::Attempt { claim_id, attempt } => pending.push((claim_id, attempt)),
            TranscriptLine::Summary { claim, status, queries_used, variant, notes } => {
                let (mine, rest): (Vec<_>, Vec<_>) =
                    pending.into_iter().partition(|(id, _)| *id == claim.id);
                pending = rest;
                transcripts.push(AttackTranscript {
                    claim,
                    attempts: mine.into_iter().map(|(_, a)| a).collect(),
                    status,
                    queries_used,
                    variant,
                    notes,
                });
            }
        }
    }
    if let Some((id, _)) = pending.first() {
        return Err(EngineError::MalformedTranscript {
            line: 0,
            reason: format!("attempts for claim {id:?} have no summary line"),
        });
    }
    Ok(transcripts)
}

/// Reproducibility record written next to the transcripts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub campaign_id: String,
    /// `in_progress` while attacks run, `complete` once flushed.
    pub status: String,
    pub config: CampaignConfig,
    pub rng_algorithm: String,
    pub detector_id: String,
    pub prompt_checksums: std::collections::BTreeMap<String, String>,
    pub provider_identities: std::collections::BTreeMap<String, String>,
}

impl CampaignManifest {
    pub fn new(config: &CampaignConfig, bindings: &Bindings, gateway: &Gateway) -> Self {
        let prompt_checksums = crate::prompts::all()
            .iter()
            .map(|r| (format!("{}_{}", r.name, r.version), r.checksum()))
            .collect();
        Self {
            campaign_id: config.campaign_id.clone(),
            status: "in_progress".into(),
            config: config.clone(),
            rng_algorithm: RNG_ALGORITHM.into(),
            detector_id: gateway.detector_identity(),
            prompt_checksums,
            provider_identities: bindings.identities(),
        }
    }
}
