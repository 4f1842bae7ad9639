//! Threshold selection from human annotations: stratified sampling of
//! candidate pairs, inter-annotator agreement, and the zero-false-positive
//! threshold search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{shuffle, SplitMix64};

/// One annotated (original, rewrite) pair: machine scores plus per-annotator
/// human votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub original: String,
    pub rewrite: String,
    pub sim_mpnet: f64,
    pub sim_bert: f64,
    pub judge_coherence: bool,
    pub judge_semantic: bool,
    pub human_votes: Vec<HumanVote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVote {
    pub coherent: bool,
    pub equivalent: bool,
}

impl AnnotatedPair {
    /// Human ground truth: strict majority of annotators approving the
    /// conjunction (coherent and equivalent). Ties reject.
    pub fn human_approves(&self) -> bool {
        let approve = self.human_votes.iter().filter(|v| v.coherent && v.equivalent).count();
        2 * approve > self.human_votes.len()
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no annotated pairs supplied")]
    EmptyInput,
    #[error("pair {index} has {found} raters, expected {expected} (>= 2)")]
    RaterCountMismatch { index: usize, expected: usize, found: usize },
    #[error("no threshold pair achieves zero false positives: pair {index} is human-rejected but passes both judges at maximal scores")]
    NoZeroFpThreshold { index: usize },
}

/// Quartile bin (0..=3) per value, using the empirical quartile boundaries.
/// Ties always land in the same bin.
fn quartile_bins(values: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let n = sorted.len();
    let boundary = |k: usize| sorted[(n * k / 4).min(n - 1)];
    let (b1, b2, b3) = (boundary(1), boundary(2), boundary(3));
    values
        .iter()
        .map(|&v| {
            if v < b1 {
                0
            } else if v < b2 {
                1
            } else if v < b3 {
                2
            } else {
                3
            }
        })
        .collect()
}

/// Bin-based stratified sample: quartiles of each similarity score crossed
/// with the two judge booleans (64 bins), up to `per_bin` pairs drawn
/// deterministically from each occupied bin. Output order is by bin index,
/// then draw order.
pub fn stratified_sample(pairs: &[AnnotatedPair], per_bin: usize, seed: u64) -> Vec<AnnotatedPair> {
    if pairs.is_empty() || per_bin == 0 {
        return Vec::new();
    }
    let mpnet_bins = quartile_bins(&pairs.iter().map(|p| p.sim_mpnet).collect::<Vec<_>>());
    let bert_bins = quartile_bins(&pairs.iter().map(|p| p.sim_bert).collect::<Vec<_>>());

    // bin id = mpnet quartile * 16 + bert quartile * 4 + coherence * 2 + semantic
    let mut bins: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let bin = mpnet_bins[i] * 16
            + bert_bins[i] * 4
            + usize::from(p.judge_coherence) * 2
            + usize::from(p.judge_semantic);
        bins.entry(bin).or_default().push(i);
    }

    let mut out = Vec::new();
    for (bin, mut members) in bins {
        let mut rng = SplitMix64::new(seed ^ (bin as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        shuffle(&mut members, &mut rng);
        for &idx in members.iter().take(per_bin) {
            out.push(pairs[idx].clone());
        }
    }
    out
}

/// Fleiss' kappa over a subjects x categories table of vote counts.
///
/// Every subject must have the same number of votes `r >= 2`. Returns 1.0
/// exactly for unanimous tables; when expected agreement is 1 (every vote in
/// one category), agreement is trivially perfect and 1.0 is returned by
/// convention.
pub fn fleiss_kappa(ratings: &[Vec<u32>]) -> Result<f64, CalibrationError> {
    if ratings.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let raters: u32 = ratings[0].iter().sum();
    if raters < 2 {
        return Err(CalibrationError::RaterCountMismatch {
            index: 0,
            expected: 2,
            found: raters as usize,
        });
    }
    let categories = ratings[0].len();
    for (index, row) in ratings.iter().enumerate() {
        let sum: u32 = row.iter().sum();
        if sum != raters || row.len() != categories {
            return Err(CalibrationError::RaterCountMismatch {
                index,
                expected: raters as usize,
                found: sum as usize,
            });
        }
    }

    let n = ratings.len() as f64;
    let r = f64::from(raters);
    let mut p_bar = 0.0;
    let mut category_totals = vec![0.0f64; categories];
    for row in ratings {
        let sum_sq: f64 = row.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
        p_bar += (sum_sq - r) / (r * (r - 1.0));
        for (j, &c) in row.iter().enumerate() {
            category_totals[j] += f64::from(c);
        }
    }
    p_bar /= n;
    let p_e: f64 = category_totals.iter().map(|t| (t / (n * r)).powi(2)).sum();

    if p_e >= 1.0 {
        // Degenerate: all votes in one category for every subject.
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// The selected thresholds and the evidence behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub tau_mpnet: f64,
    pub tau_bert: f64,
    /// Human-approved pairs the acceptance predicate admits.
    pub accepted_count: usize,
    /// Human-rejected pairs admitted; zero by construction.
    pub false_positive_count: usize,
    pub kappa_coherence: f64,
    pub kappa_equivalence: f64,
}

fn accepts(pair: &AnnotatedPair, tau_mpnet: f64, tau_bert: f64) -> bool {
    pair.sim_mpnet >= tau_mpnet
        && pair.sim_bert >= tau_bert
        && pair.judge_coherence
        && pair.judge_semantic
}

fn kappa_from_votes(
    pairs: &[AnnotatedPair],
    pick: impl Fn(&HumanVote) -> bool,
) -> Result<f64, CalibrationError> {
    let table: Vec<Vec<u32>> = pairs
        .iter()
        .map(|p| {
            let yes = p.human_votes.iter().filter(|v| pick(v)).count() as u32;
            let no = p.human_votes.len() as u32 - yes;
            vec![no, yes]
        })
        .collect();
    fleiss_kappa(&table)
}

/// Exhaustive joint search over the observed score grid for the threshold
/// pair that accepts zero human-rejected pairs while admitting the most
/// human-approved ones. Ties resolve to the lexicographically lowest
/// `(tau_mpnet, tau_bert)`.
pub fn select_thresholds(pairs: &[AnnotatedPair]) -> Result<CalibrationResult, CalibrationError> {
    if pairs.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let expected = pairs[0].human_votes.len().max(2);
    for (index, p) in pairs.iter().enumerate() {
        if p.human_votes.is_empty() {
            return Err(CalibrationError::RaterCountMismatch { index, expected, found: 0 });
        }
    }

    let mut mpnet_grid: Vec<f64> = pairs.iter().map(|p| p.sim_mpnet).collect();
    let mut bert_grid: Vec<f64> = pairs.iter().map(|p| p.sim_bert).collect();
    mpnet_grid.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    bert_grid.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    mpnet_grid.dedup();
    bert_grid.dedup();

    let approved: Vec<&AnnotatedPair> = pairs.iter().filter(|p| p.human_approves()).collect();
    let rejected: Vec<&AnnotatedPair> = pairs.iter().filter(|p| !p.human_approves()).collect();

    let mut best: Option<(usize, f64, f64)> = None;
    for &tau_m in &mpnet_grid {
        for &tau_b in &bert_grid {
            let fp = rejected.iter().filter(|p| accepts(p, tau_m, tau_b)).count();
            if fp > 0 {
                continue;
            }
            let accepted = approved.iter().filter(|p| accepts(p, tau_m, tau_b)).count();
            let better = match best {
                None => true,
                Some((best_accepted, bm, bb)) => {
                    accepted > best_accepted
                        || (accepted == best_accepted && (tau_m, tau_b) < (bm, bb))
                }
            };
            if better {
                best = Some((accepted, tau_m, tau_b));
            }
        }
    }

    let Some((accepted_count, tau_mpnet, tau_bert)) = best else {
        // Even the maximal observed scores admit a human-rejected pair that
        // passes both judges; thresholds alone cannot fix that.
        let index = pairs
            .iter()
            .position(|p| !p.human_approves() && p.judge_coherence && p.judge_semantic)
            .unwrap_or(0);
        return Err(CalibrationError::NoZeroFpThreshold { index });
    };

    Ok(CalibrationResult {
        tau_mpnet,
        tau_bert,
        accepted_count,
        false_positive_count: 0,
        kappa_coherence: kappa_from_votes(pairs, |v| v.coherent)?,
        kappa_equivalence: kappa_from_votes(pairs, |v| v.equivalent)?,
    })
}
