//! Browser bindings for the parts of the engine that run fully offline:
//! pair evaluation with the reference scorers, the text-comparison metrics,
//! and a scripted campaign replay that traces cumulative success curves.
//!
//! Every export returns a JSON string; malformed inputs come back as
//! `{"error": "..."}` rather than a panic.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use claimveil::engine::{run_campaign, CampaignConfig};
use claimveil::evaluation::{accept, cosine_similarity, EvaluationReport, Thresholds};
use claimveil::metrics::{
    build_parse_tree, flesch_reading_ease, levenshtein, normalized_tree_edit_distance, text_counts,
    tree_edit_distance, TreeNode,
};
use claimveil::model::{filter_and_sample, AttackStatus, BinaryLabel, Claim, Variant, Verifiability};
use claimveil::providers::{
    Bindings, ChatRule, ExactMatchTokenF1, ProviderRole, ScriptedChat,
    SentenceEmbedderProvider, TokenSimilarityProvider, TrigramEmbedder,
};
use claimveil::victim::{Gateway, RawVerdict, ScriptedDetector};

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"))
}

fn error_json(message: &str) -> String {
    to_json(&serde_json::json!({ "error": message }))
}

#[derive(Serialize)]
struct PairEvaluation {
    sim_mpnet: f64,
    sim_bert: f64,
    sim_mpnet_pass: bool,
    sim_bert_pass: bool,
    sem_check: bool,
    coherence: bool,
    flipped: bool,
    accept: bool,
}

/// Score a rewrite against its original with the reference embedder and
/// token scorer. Judge verdicts and the label flip are inputs here (the
/// offline demo has no LLM judges to consult).
#[wasm_bindgen]
pub fn evaluate_pair(
    original: &str,
    rewrite: &str,
    tau_mpnet: f64,
    tau_bert: f64,
    sem_check: bool,
    coherence: bool,
    flipped: bool,
) -> String {
    if original.trim().is_empty() || rewrite.trim().is_empty() {
        return error_json("both texts must be non-empty");
    }
    let thresholds = match Thresholds::new(tau_mpnet, tau_bert) {
        Ok(t) => t,
        Err(e) => return error_json(&e.to_string()),
    };
    let embedder = TrigramEmbedder::default();
    let (a, b) = match (embedder.embed(original), embedder.embed(rewrite)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return error_json("embedding failed"),
    };
    let sim_mpnet = match cosine_similarity(&b, &a) {
        Ok(v) => v,
        Err(e) => return error_json(&e.to_string()),
    };
    let sim_bert = match ExactMatchTokenF1.raw_f1(rewrite, original) {
        Ok(v) => v,
        Err(e) => return error_json(&e.to_string()),
    };
    let report = EvaluationReport::from_scores(sim_mpnet, sim_bert, sem_check, coherence, &thresholds);
    to_json(&PairEvaluation {
        sim_mpnet: report.sim_mpnet,
        sim_bert: report.sim_bert,
        sim_mpnet_pass: report.sim_mpnet_pass,
        sim_bert_pass: report.sim_bert_pass,
        sem_check,
        coherence,
        flipped,
        accept: accept(&report, flipped),
    })
}

#[derive(Serialize)]
struct TextProfile {
    chars: usize,
    words: usize,
    sentences: usize,
    syllables: usize,
    flesch: Option<f64>,
    parse_tree: TreeNode,
}

fn profile(text: &str) -> TextProfile {
    let counts = text_counts(text);
    TextProfile {
        chars: text.chars().count(),
        words: counts.words,
        sentences: counts.sentences,
        syllables: counts.syllables,
        flesch: flesch_reading_ease(text).ok(),
        parse_tree: build_parse_tree(text),
    }
}

#[derive(Serialize)]
struct PairAnalysis {
    levenshtein: usize,
    tree_edit_distance: usize,
    normalized_tree_distance: f64,
    token_f1: Option<f64>,
    original: TextProfile,
    adversarial: TextProfile,
}

/// The comparison battery for one (original, adversarial) pair.
#[wasm_bindgen]
pub fn analyze_pair(original: &str, adversarial: &str) -> String {
    if original.trim().is_empty() || adversarial.trim().is_empty() {
        return error_json("both texts must be non-empty");
    }
    let t1 = build_parse_tree(original);
    let t2 = build_parse_tree(adversarial);
    to_json(&PairAnalysis {
        levenshtein: levenshtein(original, adversarial),
        tree_edit_distance: tree_edit_distance(&t1, &t2),
        normalized_tree_distance: normalized_tree_edit_distance(&t1, &t2),
        token_f1: ExactMatchTokenF1.raw_f1(adversarial, original).ok(),
        original: profile(original),
        adversarial: profile(adversarial),
    })
}

const YES: &str = r#"{"score": 1, "explanation": "ok"}"#;

/// Claims for the built-in scripted campaign, with the iteration at which
/// the scripted attacker finds a hedged rewrite that flips the detector
/// (0 = never).
const DEMO_CLAIMS: &[(&str, &str, u32)] = &[
    ("c01", "the city budget grew by four percent this year", 1),
    ("c02", "the senator voted against the infrastructure bill", 2),
    ("c03", "unemployment fell to five percent in march", 1),
    ("c04", "the new bridge opened to traffic in june", 3),
    ("c05", "the district hired ninety new teachers", 0),
    ("c06", "the hospital treated a record number of patients", 2),
    ("c07", "the state exported more grain than last season", 5),
    ("c08", "the library expanded its weekend opening hours", 0),
    ("c09", "the utility raised rates by three percent", 4),
    ("c10", "the airline canceled forty flights on monday", 1),
    ("c11", "the museum attracted a million visitors last year", 7),
    ("c12", "the port handled fewer containers in april", 0),
];

fn demo_world() -> (Vec<Claim>, Bindings, Gateway) {
    let claims: Vec<Claim> = DEMO_CLAIMS
        .iter()
        .map(|(id, text, _)| {
            Claim::new(*id, *text, BinaryLabel::False, Verifiability::Possible).unwrap()
        })
        .collect();

    let mut attacker_rules = Vec::new();
    for (_, text, flip_at) in DEMO_CLAIMS {
        if *flip_at > 1 {
            attacker_rules.push(ChatRule {
                system_contains: Some(format!("PHASE-{flip_at}~")),
                user_contains: Some(text.to_string()),
                response: format!("{text} reportedly"),
            });
        }
        let first = if *flip_at == 1 {
            format!("{text} reportedly")
        } else {
            format!("{text} plainly")
        };
        attacker_rules.push(ChatRule {
            system_contains: None,
            user_contains: Some(text.to_string()),
            response: first,
        });
    }
    // The optimizer advances one phase per failed iteration, keyed on the
    // newest record in its context.
    let optimizer_rules: Vec<ChatRule> = (1..=10)
        .rev()
        .map(|t| ChatRule {
            system_contains: None,
            user_contains: Some(format!("\"iteration\": {t},")),
            response: format!(
                r#"{{"analysis": {{"diagnosis": "iteration {t} kept the verdict"}}, "system_prompt": "You are a claim perturbation tool. PHASE-{}~ Hedge the attribution."}}"#,
                t + 1
            ),
        })
        .collect();

    let bindings = Bindings::builder()
        .chat(ProviderRole::AttackerLlm, Arc::new(ScriptedChat::rules(attacker_rules, None)))
        .chat(ProviderRole::OptimizerLlm, Arc::new(ScriptedChat::rules(optimizer_rules, None)))
        .chat(ProviderRole::SemanticJudge, Arc::new(ScriptedChat::constant(YES)))
        .chat(ProviderRole::CoherenceJudge, Arc::new(ScriptedChat::constant(YES)))
        .embedder(Arc::new(TrigramEmbedder::default()))
        .token_similarity(Arc::new(ExactMatchTokenF1))
        .build();
    let detector =
        ScriptedDetector::constant(RawVerdict::False).with_substring("reportedly", RawVerdict::True);
    let gateway = Gateway::new(Arc::new(detector), bindings.call_log().clone());
    (claims, bindings, gateway)
}

#[derive(Serialize)]
struct ReplayOutcome {
    claim_id: String,
    claim_text: String,
    status: String,
    iterations: u32,
    final_rewrite: Option<String>,
}

#[derive(Serialize)]
struct ReplayResult {
    variant: String,
    budget: u32,
    seed: u64,
    sample_size: usize,
    asr: f64,
    cumulative_asr: Vec<f64>,
    outcomes: Vec<ReplayOutcome>,
}

/// Run the built-in scripted campaign: `sample_size` claims drawn by seed,
/// attacked under the chosen variant and budget. Deterministic for a given
/// parameter triple.
#[wasm_bindgen]
pub fn replay_campaign(seed: u64, budget: u32, sample_size: usize, variant: &str) -> String {
    let variant = match variant {
        "full" | "full_history" => Variant::FullHistory,
        "prev" | "previous_only" => Variant::PreviousOnly,
        "attacker-only" | "attacker_only" => Variant::AttackerOnly,
        other => return error_json(&format!("unknown variant {other:?}")),
    };
    if !(1..=10).contains(&budget) {
        return error_json("budget must lie in 1..=10");
    }
    let (claims, bindings, gateway) = demo_world();
    let sample_size = sample_size.clamp(1, claims.len());
    let sampled = match filter_and_sample(&claims, &Default::default(), sample_size, seed) {
        Ok(s) => s,
        Err(e) => return error_json(&e.to_string()),
    };

    let mut config = CampaignConfig::new("browser-demo", variant);
    config.budget_limit = budget;
    config.seed = seed;
    let result = match run_campaign(&sampled, &config, &bindings, &gateway) {
        Ok(r) => r,
        Err(e) => return error_json(&e.to_string()),
    };

    let outcomes = result
        .transcripts
        .iter()
        .map(|t| ReplayOutcome {
            claim_id: t.claim.id.clone(),
            claim_text: t.claim.text.clone(),
            status: match t.status {
                AttackStatus::Succeeded(k) => format!("succeeded at iteration {k}"),
                AttackStatus::ExhaustedBudget => "exhausted budget".into(),
                AttackStatus::Aborted(k) => format!("aborted at iteration {k}"),
            },
            iterations: t.queries_used,
            final_rewrite: match t.status {
                AttackStatus::Succeeded(_) => {
                    t.attempts.last().map(|a| a.rewrite_text.clone())
                }
                _ => None,
            },
        })
        .collect();

    to_json(&ReplayResult {
        variant: format!("{variant:?}"),
        budget,
        seed,
        sample_size,
        asr: result.asr,
        cumulative_asr: result.cumulative_asr,
        outcomes,
    })
}
