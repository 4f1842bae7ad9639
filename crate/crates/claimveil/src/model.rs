//! Domain types, dataset ingestion, and label semantics.
//!
//! Everything here is an immutable value object after construction and safe
//! to share across threads.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvaluationReport;
use crate::rng::{sample_indices, SplitMix64};
use crate::victim::RawVerdict;

/// Binary veracity verdict. `True` is the "1" class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    False,
    True,
}

impl BinaryLabel {
    pub fn flip(self) -> Self {
        match self {
            BinaryLabel::False => BinaryLabel::True,
            BinaryLabel::True => BinaryLabel::False,
        }
    }
}

/// The six source-dataset veracity levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SixWayLabel {
    PantsFire,
    False,
    MostlyFalse,
    HalfTrue,
    MostlyTrue,
    True,
}

impl SixWayLabel {
    pub const ALL: [SixWayLabel; 6] = [
        SixWayLabel::PantsFire,
        SixWayLabel::False,
        SixWayLabel::MostlyFalse,
        SixWayLabel::HalfTrue,
        SixWayLabel::MostlyTrue,
        SixWayLabel::True,
    ];

    /// Parse a label token. Case, hyphens, underscores and spaces are
    /// ignored, so `"Pants-fire"`, `"pants_fire"` and `"PANTSFIRE"` all map
    /// to [`SixWayLabel::PantsFire`]. Unknown tokens are rejected (closed
    /// enumeration).
    pub fn parse(token: &str) -> Option<Self> {
        let norm: String = token
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "pantsfire" => Some(SixWayLabel::PantsFire),
            "false" => Some(SixWayLabel::False),
            "mostlyfalse" => Some(SixWayLabel::MostlyFalse),
            "halftrue" => Some(SixWayLabel::HalfTrue),
            "mostlytrue" => Some(SixWayLabel::MostlyTrue),
            "true" => Some(SixWayLabel::True),
            _ => None,
        }
    }
}

/// Whether a claim can be verified without additional context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verifiability {
    Possible,
    Hard,
    Impossible,
}

impl Verifiability {
    pub fn parse(token: &str) -> Option<Self> {
        match token.trim().to_lowercase().as_str() {
            "possible" => Some(Verifiability::Possible),
            "hard" => Some(Verifiability::Hard),
            "impossible" => Some(Verifiability::Impossible),
            _ => None,
        }
    }
}

/// Collapse the six veracity levels onto the binary scheme: the three
/// false-leaning levels map to `False`, the rest to `True`.
pub fn map_to_binary(label: SixWayLabel) -> BinaryLabel {
    match label {
        SixWayLabel::PantsFire | SixWayLabel::False | SixWayLabel::MostlyFalse => {
            BinaryLabel::False
        }
        SixWayLabel::HalfTrue | SixWayLabel::MostlyTrue | SixWayLabel::True => BinaryLabel::True,
    }
}

/// A short verifiable assertion with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub truth_label: BinaryLabel,
    pub verifiability: Verifiability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label: Option<SixWayLabel>,
}

impl Claim {
    /// Build a claim from a six-way source label; the binary truth label is
    /// derived via [`map_to_binary`].
    pub fn from_source(
        id: impl Into<String>,
        text: impl Into<String>,
        source_label: SixWayLabel,
        verifiability: Verifiability,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyText);
        }
        Ok(Self {
            id: id.into(),
            text,
            truth_label: map_to_binary(source_label),
            verifiability,
            source_label: Some(source_label),
        })
    }

    /// Build a claim directly from a binary label (no six-way provenance).
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        truth_label: BinaryLabel,
        verifiability: Verifiability,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyText);
        }
        Ok(Self {
            id: id.into(),
            text,
            truth_label,
            verifiability,
            source_label: None,
        })
    }
}

/// Optimizer context selection for one attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Optimizer sees every prior attempt.
    FullHistory,
    /// Optimizer sees only the most recent attempt.
    PreviousOnly,
    /// No optimizer: the attacker keeps its initial instructions.
    AttackerOnly,
}

/// One iteration of the loop: the candidate rewrite and everything observed
/// about it.
///
/// `detector_verdict`/`detector_raw` are `None` only when the campaign runs
/// with the cost-saving flag that skips the victim query after a constraint
/// failure; in the default configuration every attempt carries a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteAttempt {
    pub iteration: u32,
    pub rewrite_text: String,
    pub evaluation: EvaluationReport,
    pub detector_raw: Option<RawVerdict>,
    pub detector_verdict: Option<BinaryLabel>,
    pub attack_success: bool,
    pub temperature_used: f64,
    pub instructions_snapshot: String,
}

/// Terminal state of one attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    /// All constraints and the label flip held at this iteration.
    Succeeded(u32),
    /// The query budget ran out with no accepted rewrite.
    ExhaustedBudget,
    /// Unrecoverable provider/detector failure at this iteration.
    Aborted(u32),
}

/// Ordered attempt history for one attacked claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTranscript {
    pub claim: Claim,
    pub attempts: Vec<RewriteAttempt>,
    pub status: AttackStatus,
    pub queries_used: u32,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AttackTranscript {
    /// Check the structural invariants every engine output must satisfy.
    pub fn check_invariants(&self, budget_limit: u32) -> Result<(), String> {
        if self.attempts.len() > budget_limit as usize {
            return Err(format!("{} attempts exceed the budget {budget_limit}", self.attempts.len()));
        }
        for (i, attempt) in self.attempts.iter().enumerate() {
            if attempt.iteration != i as u32 + 1 {
                return Err(format!(
                    "iteration {} at position {i}; iterations must be consecutive from 1",
                    attempt.iteration
                ));
            }
            if let Some(verdict) = attempt.detector_verdict {
                let flipped = verdict != self.claim.truth_label;
                if attempt.attack_success != flipped {
                    return Err(format!(
                        "attempt {}: attack_success does not match the verdict comparison",
                        attempt.iteration
                    ));
                }
            } else if attempt.attack_success {
                return Err(format!(
                    "attempt {}: attack_success without a detector verdict",
                    attempt.iteration
                ));
            }
        }
        let queried =
            self.attempts.iter().filter(|a| a.detector_verdict.is_some()).count() as u32;
        if self.queries_used != queried {
            return Err(format!(
                "queries_used {} but {} attempts carry verdicts",
                self.queries_used, queried
            ));
        }
        if let AttackStatus::Succeeded(k) = self.status {
            if self.attempts.len() != k as usize {
                return Err(format!("succeeded at {k} but {} attempts recorded", self.attempts.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("claim text must be non-empty")]
    EmptyText,
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: u64, reason: String },
    #[error("duplicate claim id {id:?} at line {line}")]
    DuplicateId { id: String, line: u64 },
    #[error("requested {requested} samples but only {available} claims remain after filtering")]
    InsufficientPopulation { requested: usize, available: usize },
}

/// Input encodings for [`load_claims`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimFormat {
    /// UTF-8 comma-separated table with a header row naming at least
    /// `id`, `text`, `label`, `verifiability`. Extra columns are ignored.
    DelimitedTable,
    /// One JSON object per line with those same four fields.
    RecordLines,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    label: String,
    verifiability: String,
}

/// Load claims from a byte stream, preserving record order. The binary truth
/// label is always derived from the six-way label via [`map_to_binary`].
pub fn load_claims<R: Read>(source: R, format: ClaimFormat) -> Result<Vec<Claim>, ModelError> {
    match format {
        ClaimFormat::DelimitedTable => load_delimited(source),
        ClaimFormat::RecordLines => load_record_lines(source),
    }
}

fn build_claim(raw: RawRecord, line: u64, seen: &mut BTreeSet<String>) -> Result<Claim, ModelError> {
    let label = SixWayLabel::parse(&raw.label).ok_or_else(|| ModelError::ParseError {
        line,
        reason: format!("unknown label token {:?}", raw.label),
    })?;
    let verifiability =
        Verifiability::parse(&raw.verifiability).ok_or_else(|| ModelError::ParseError {
            line,
            reason: format!("unknown verifiability token {:?}", raw.verifiability),
        })?;
    if !seen.insert(raw.id.clone()) {
        return Err(ModelError::DuplicateId { id: raw.id, line });
    }
    Claim::from_source(raw.id, raw.text, label, verifiability).map_err(|_| ModelError::ParseError {
        line,
        reason: "empty claim text".into(),
    })
}

fn load_delimited<R: Read>(source: R) -> Result<Vec<Claim>, ModelError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| ModelError::ParseError { line: 1, reason: e.to_string() })?
        .clone();
    let col = |name: &str| -> Result<usize, ModelError> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| ModelError::ParseError {
                line: 1,
                reason: format!("missing required column {name:?}"),
            })
    };
    let (id_col, text_col, label_col, ver_col) =
        (col("id")?, col("text")?, col("label")?, col("verifiability")?);

    let mut claims = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, record) in reader.records().enumerate() {
        let line = (idx + 2) as u64; // header occupies line 1
        let record = record.map_err(|e| ModelError::ParseError { line, reason: e.to_string() })?;
        let field = |i: usize| -> Result<String, ModelError> {
            record
                .get(i)
                .map(str::to_owned)
                .ok_or_else(|| ModelError::ParseError { line, reason: "short record".into() })
        };
        let raw = RawRecord {
            id: field(id_col)?,
            text: field(text_col)?,
            label: field(label_col)?,
            verifiability: field(ver_col)?,
        };
        claims.push(build_claim(raw, line, &mut seen)?);
    }
    Ok(claims)
}

fn load_record_lines<R: Read>(mut source: R) -> Result<Vec<Claim>, ModelError> {
    let mut buf = String::new();
    source
        .read_to_string(&mut buf)
        .map_err(|e| ModelError::ParseError { line: 0, reason: e.to_string() })?;
    let mut claims = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line_text) in buf.lines().enumerate() {
        let line = (idx + 1) as u64;
        if line_text.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line_text)
            .map_err(|e| ModelError::ParseError { line, reason: e.to_string() })?;
        claims.push(build_claim(raw, line, &mut seen)?);
    }
    Ok(claims)
}

/// Drop the excluded verifiability classes, then draw a uniform sample of
/// `n` claims without replacement. Deterministic for a given seed; the
/// generator is documented in [`crate::rng`].
pub fn filter_and_sample(
    claims: &[Claim],
    exclude: &BTreeSet<Verifiability>,
    n: usize,
    seed: u64,
) -> Result<Vec<Claim>, ModelError> {
    let pool: Vec<&Claim> = claims.iter().filter(|c| !exclude.contains(&c.verifiability)).collect();
    if n > pool.len() {
        return Err(ModelError::InsufficientPopulation { requested: n, available: pool.len() });
    }
    let mut rng = SplitMix64::new(seed);
    let picked = sample_indices(pool.len(), n, &mut rng);
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

/// Sampling order relative to verifiability filtering. The source material
/// does not pin down which order produced the published subset, so campaigns
/// choose explicitly (default: filter first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrder {
    #[default]
    FilterThenSample,
    /// Sample `n` from the raw pool first, then drop excluded classes
    /// (the returned list may therefore be shorter than `n`).
    SampleThenFilter,
}

/// [`filter_and_sample`] with an explicit order. `SampleThenFilter` draws
/// from the unfiltered pool and then removes excluded classes.
pub fn sample_with_order(
    claims: &[Claim],
    exclude: &BTreeSet<Verifiability>,
    n: usize,
    seed: u64,
    order: SampleOrder,
) -> Result<Vec<Claim>, ModelError> {
    match order {
        SampleOrder::FilterThenSample => filter_and_sample(claims, exclude, n, seed),
        SampleOrder::SampleThenFilter => {
            if n > claims.len() {
                return Err(ModelError::InsufficientPopulation {
                    requested: n,
                    available: claims.len(),
                });
            }
            let mut rng = SplitMix64::new(seed);
            let picked = sample_indices(claims.len(), n, &mut rng);
            Ok(picked
                .into_iter()
                .map(|i| claims[i].clone())
                .filter(|c| !exclude.contains(&c.verifiability))
                .collect())
        }
    }
}
