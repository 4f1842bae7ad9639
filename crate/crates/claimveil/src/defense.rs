//! Text-simplification input-transformation defense and its effectiveness
//! harness.
//!
//! The defense rewrites a (possibly adversarial) claim into plainer language
//! before detection; the harness replays every winning rewrite through the
//! simplifier, re-classifies it once, and reports how much of the attack
//! survives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::normalize_reply;
use crate::metrics::flesch_reading_ease;
use crate::model::{AttackStatus, AttackTranscript};
use crate::prompts;
use crate::providers::{Bindings, ChatRequest, ProviderError, ProviderRole};
use crate::victim::Gateway;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("simplifier returned empty text")]
    EmptySimplification,
    #[error("defense harness requires succeeded transcripts, got {0:?}")]
    NotASuccess(AttackStatus),
    #[error("no samples survived rescoring")]
    NoSamples,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Simplify one claim with the shipped defense instructions.
pub fn simplify(bindings: &Bindings, claim_text: &str) -> Result<String, DefenseError> {
    let req = ChatRequest::new(prompts::DEFENSE_SIMPLIFY.text, claim_text, 1.0)
        .with_trace("defense/simplify".to_owned());
    let raw = bindings.chat(ProviderRole::SimplifierLlm, &req)?;
    let simplified = normalize_reply(&raw);
    if simplified.is_empty() {
        return Err(DefenseError::EmptySimplification);
    }
    Ok(simplified)
}

/// Per-detector defense effectiveness, mirroring the attack-vs-defended
/// comparison columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseReport {
    pub detector_id: String,
    /// Successful attacks that were rescored.
    pub samples: usize,
    /// Samples whose simplified rewrite still flips the verdict.
    pub still_successful: usize,
    pub asr_attack: f64,
    pub asr_after: f64,
    /// `100 * (asr_attack - asr_after) / asr_attack`; 0 when the attack rate
    /// is already 0.
    pub reduction_pct: f64,
    pub reading_ease_attack: f64,
    pub reading_ease_after: f64,
    /// Claim ids dropped because the detector or readability scoring failed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_ids: Vec<String>,
}

/// Percentage reduction of the attack success rate.
pub fn reduction_pct(asr_attack: f64, asr_after: f64) -> f64 {
    if asr_attack == 0.0 {
        return 0.0;
    }
    100.0 * (asr_attack - asr_after) / asr_attack
}

/// Simplify every winning rewrite, re-classify it once (budget-exempt), and
/// report the surviving attack rate.
///
/// `asr_attack` is the campaign's success rate over its baseline-correct
/// subset; `asr_after` scales it by the surviving fraction, which keeps the
/// reduction a pure ratio independent of the subset size.
pub fn defend_and_rescore(
    transcripts: &[AttackTranscript],
    asr_attack: f64,
    gateway: &Gateway,
    bindings: &Bindings,
) -> Result<DefenseReport, DefenseError> {
    let mut still_successful = 0usize;
    let mut samples = 0usize;
    let mut ease_attack_sum = 0.0;
    let mut ease_after_sum = 0.0;
    let mut excluded_ids = Vec::new();

    for transcript in transcripts {
        let AttackStatus::Succeeded(_) = transcript.status else {
            return Err(DefenseError::NotASuccess(transcript.status));
        };
        let winning = &transcript
            .attempts
            .last()
            .expect("a succeeded transcript has at least one attempt")
            .rewrite_text;
        let simplified = simplify(bindings, winning)?;

        let trace = format!("defense/{}", transcript.claim.id);
        let verdict =
            match gateway.classify_unbudgeted(&simplified, transcript.claim.truth_label, &trace) {
                Ok(v) => v,
                Err(_) => {
                    excluded_ids.push(transcript.claim.id.clone());
                    continue;
                }
            };
        let (ease_attack, ease_after) =
            match (flesch_reading_ease(winning), flesch_reading_ease(&simplified)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    excluded_ids.push(transcript.claim.id.clone());
                    continue;
                }
            };

        samples += 1;
        ease_attack_sum += ease_attack;
        ease_after_sum += ease_after;
        if verdict.mapped != transcript.claim.truth_label {
            still_successful += 1;
        }
    }

    if samples == 0 {
        return Err(DefenseError::NoSamples);
    }
    let surviving_fraction = still_successful as f64 / samples as f64;
    let asr_after = asr_attack * surviving_fraction;
    Ok(DefenseReport {
        detector_id: gateway.detector_identity(),
        samples,
        still_successful,
        asr_attack,
        asr_after,
        reduction_pct: reduction_pct(asr_attack, asr_after),
        reading_ease_attack: ease_attack_sum / samples as f64,
        reading_ease_after: ease_after_sum / samples as f64,
        excluded_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{EvaluationReport, Thresholds};
    use crate::model::{BinaryLabel, Claim, RewriteAttempt, Variant, Verifiability};
    use crate::providers::{CallKind, CallLog, ScriptedChat};
    use crate::victim::{RawVerdict, ScriptedDetector};
    use std::sync::Arc;

    fn winning_transcript(id: &str, rewrite: &str) -> AttackTranscript {
        let claim =
            Claim::new(id, "the senator voted.", BinaryLabel::False, Verifiability::Possible)
                .unwrap();
        let report = EvaluationReport::from_scores(0.9, 0.9, true, true, &Thresholds::default());
        AttackTranscript {
            claim,
            attempts: vec![RewriteAttempt {
                iteration: 1,
                rewrite_text: rewrite.to_owned(),
                evaluation: report,
                detector_raw: Some(RawVerdict::True),
                detector_verdict: Some(BinaryLabel::True),
                attack_success: true,
                temperature_used: 1.0,
                instructions_snapshot: "init".into(),
            }],
            status: AttackStatus::Succeeded(1),
            queries_used: 1,
            variant: Variant::FullHistory,
            notes: vec![],
        }
    }

    fn bindings_with(simplifier: ScriptedChat) -> Bindings {
        Bindings::builder()
            .chat(ProviderRole::SimplifierLlm, Arc::new(simplifier))
            .build()
    }

    #[test]
    fn identity_simplifier_gives_zero_reduction() {
        let bindings = bindings_with(ScriptedChat::echo());
        // The rewrite contains the hedge, so the detector still flips.
        let detector = ScriptedDetector::constant(RawVerdict::False)
            .with_substring("reportedly", RawVerdict::True);
        let gateway = Gateway::new(Arc::new(detector), Arc::new(CallLog::new()));
        let transcripts = vec![
            winning_transcript("a", "the senator reportedly voted."),
            winning_transcript("b", "the senator reportedly voted twice."),
        ];
        let report = defend_and_rescore(&transcripts, 40.0, &gateway, &bindings).unwrap();
        assert_eq!(report.asr_after, 40.0);
        assert_eq!(report.reduction_pct, 0.0);
        assert_eq!(report.reading_ease_attack, report.reading_ease_after);
    }

    #[test]
    fn hedge_stripping_simplifier_gives_full_reduction() {
        let bindings = bindings_with(ScriptedChat::strip_tokens(vec!["reportedly".into()]));
        let detector = ScriptedDetector::constant(RawVerdict::False)
            .with_substring("reportedly", RawVerdict::True);
        let gateway = Gateway::new(Arc::new(detector), Arc::new(CallLog::new()));
        let transcripts = vec![winning_transcript("a", "the senator reportedly voted.")];
        let report = defend_and_rescore(&transcripts, 40.0, &gateway, &bindings).unwrap();
        assert_eq!(report.asr_after, 0.0);
        assert_eq!(report.reduction_pct, 100.0);
        assert_eq!(report.still_successful, 0);
    }

    #[test]
    fn one_detector_query_per_defended_sample() {
        let bindings = bindings_with(ScriptedChat::echo());
        let log = Arc::new(CallLog::new());
        let detector = ScriptedDetector::constant(RawVerdict::True);
        let gateway = Gateway::new(Arc::new(detector), log.clone());
        let transcripts = vec![
            winning_transcript("a", "rewrite one holds."),
            winning_transcript("b", "rewrite two holds."),
            winning_transcript("c", "rewrite three holds."),
        ];
        defend_and_rescore(&transcripts, 30.0, &gateway, &bindings).unwrap();
        assert_eq!(log.count(&CallKind::DetectorQuery), 3);
    }

    #[test]
    fn table_row_reduction_arithmetic() {
        let r = reduction_pct(30.35, 10.57);
        assert!((r - 65.18).abs() < 0.01, "{r}");
        assert!((reduction_pct(97.02, 58.28) - 39.93).abs() < 0.01);
        assert_eq!(reduction_pct(0.0, 0.0), 0.0);
    }

    #[test]
    fn non_success_transcript_is_rejected() {
        let bindings = bindings_with(ScriptedChat::echo());
        let gateway =
            Gateway::new(Arc::new(ScriptedDetector::constant(RawVerdict::True)), Arc::new(CallLog::new()));
        let mut t = winning_transcript("a", "text.");
        t.status = AttackStatus::ExhaustedBudget;
        let err = defend_and_rescore(&[t], 10.0, &gateway, &bindings).unwrap_err();
        assert!(matches!(err, DefenseError::NotASuccess(_)));
    }
}
