//! Adversarial claim rewriting against black-box misinformation detectors.
//!
//! The library drives an iterative two-agent loop: an attacker model rewrites
//! a claim under evolving system instructions, a constraint evaluator scores
//! each rewrite for semantic equivalence and coherence, and a prompt-optimizer
//! model turns failed attempts into refined instructions. The victim detector
//! is only ever observed through its binary verdict, under a hard query
//! budget.
//!
//! Modules map onto the moving parts:
//!
//! - [`model`]: claims, labels, dataset ingestion, sampling
//! - [`providers`]: chat/embedding/scoring model bindings (scripted,
//!   reference, and remote implementations) plus the shared call log
//! - [`evaluation`]: the four constraint signals and the accept decision
//! - [`agents`]: attacker and optimizer prompt assembly and parsing
//! - [`victim`]: detector gateway, verdict normalization, query budgets
//! - [`engine`]: the attack loop, campaign orchestration, persistence
//! - [`defense`]: text-simplification defense and its rescoring harness
//! - [`metrics`]: lexical/structural/stylistic comparison battery
//! - [`calibration`]: threshold selection from human annotations

pub mod agents;
pub mod calibration;
pub mod defense;
pub mod engine;
pub mod evaluation;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod providers;
pub mod rng;
pub mod victim;

pub use evaluation::{EvaluationReport, Thresholds};
pub use model::{AttackStatus, AttackTranscript, BinaryLabel, Claim, RewriteAttempt, Variant};
