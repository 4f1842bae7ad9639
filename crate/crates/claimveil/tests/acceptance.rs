//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Oracles here are deliberately independent of the library's
//! implementations: brute-force recursions, hand-computed constants, and
//! exhaustive searches.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use claimveil::agents::temperature_for;
use claimveil::calibration::{fleiss_kappa, select_thresholds, AnnotatedPair, HumanVote};
use claimveil::defense::{defend_and_rescore, reduction_pct};
use claimveil::engine::{
    attack_success_rate, cumulative_success_by_iteration, run_attack, run_campaign, write_transcripts,
    AttackContext, CampaignConfig,
};
use claimveil::evaluation::{accept, cosine_similarity, EvaluationReport, Thresholds};
use claimveil::metrics::{flesch_reading_ease, levenshtein, tree_edit_distance, TreeNode};
use claimveil::model::{
    filter_and_sample, load_claims, map_to_binary, AttackStatus, AttackTranscript, BinaryLabel,
    Claim, ClaimFormat, RewriteAttempt, SixWayLabel, Variant, Verifiability,
};
use claimveil::providers::{
    Bindings, CallKind, ChatRule, ExactMatchTokenF1, ProviderRole, ScriptedChat, TrigramEmbedder,
};
use claimveil::rng::SplitMix64;
use claimveil::victim::{Gateway, RawVerdict, ScriptedDetector};

const YES: &str = r#"{"score": 1, "explanation": "ok"}"#;

fn pass(name: &str) {
    println!("ACCEPTANCE PASS: {name}");
}

fn claim(id: &str, text: &str) -> Claim {
    Claim::new(id, text, BinaryLabel::False, Verifiability::Possible).unwrap()
}

/// Builds a fully scripted world where the attacker's rewrite flips the
/// detector exactly at `flip_at`. The optimizer advances a PHASE marker in
/// the attacker's instructions each round; the attacker emits the hedged
/// (flipping) rewrite only once the marker for `flip_at` appears.
fn world_flipping_at(flip_at: u32) -> (Bindings, Gateway) {
    let mut attacker_rules = Vec::new();
    if flip_at > 1 {
        attacker_rules.push(ChatRule {
            system_contains: Some(format!("PHASE-{flip_at}~")),
            user_contains: None,
            response: "the measure reportedly cut spending".into(),
        });
        for t in 2..flip_at {
            attacker_rules.push(ChatRule {
                system_contains: Some(format!("PHASE-{t}~")),
                user_contains: None,
                response: format!("the measure cut spending variant {t}"),
            });
        }
    }
    let default_rewrite = if flip_at == 1 {
        "the measure reportedly cut spending"
    } else {
        "the measure cut spending variant 1"
    };

    // Rules are ordered highest-iteration first, so the newest marker in a
    // full-history context decides the next phase.
    let optimizer_rules: Vec<ChatRule> = (1..=10)
        .rev()
        .map(|t| ChatRule {
            system_contains: None,
            user_contains: Some(format!("\"iteration\": {t},")),
            response: format!(
                r#"{{"analysis": {{"diagnosis": "iteration {t} failed"}}, "system_prompt": "You are a claim perturbation tool. PHASE-{}~"}}"#,
                t + 1
            ),
        })
        .collect();

    let bindings = Bindings::builder()
        .chat(
            ProviderRole::AttackerLlm,
            Arc::new(ScriptedChat::rules(attacker_rules, Some(default_rewrite.into()))),
        )
        .chat(ProviderRole::OptimizerLlm, Arc::new(ScriptedChat::rules(optimizer_rules, None)))
        .chat(ProviderRole::SemanticJudge, Arc::new(ScriptedChat::constant(YES)))
        .chat(ProviderRole::CoherenceJudge, Arc::new(ScriptedChat::constant(YES)))
        .embedder(Arc::new(TrigramEmbedder::default()))
        .token_similarity(Arc::new(ExactMatchTokenF1))
        .build();
    let detector =
        ScriptedDetector::constant(RawVerdict::False).with_substring("reportedly", RawVerdict::True);
    let gateway = Gateway::new(Arc::new(detector), bindings.call_log().clone());
    (bindings, gateway)
}

fn never_flip_world() -> (Bindings, Gateway) {
    let optimizer = ScriptedChat::constant(
        r#"{"analysis": {"diagnosis": "no flip yet"}, "system_prompt": "You are a claim perturbation tool. Try again."}"#,
    );
    let bindings = Bindings::builder()
        .chat(ProviderRole::AttackerLlm, Arc::new(ScriptedChat::echo()))
        .chat(ProviderRole::OptimizerLlm, Arc::new(optimizer))
        .chat(ProviderRole::SemanticJudge, Arc::new(ScriptedChat::constant(YES)))
        .chat(ProviderRole::CoherenceJudge, Arc::new(ScriptedChat::constant(YES)))
        .embedder(Arc::new(TrigramEmbedder::default()))
        .token_similarity(Arc::new(ExactMatchTokenF1))
        .build();
    let gateway = Gateway::new(
        Arc::new(ScriptedDetector::constant(RawVerdict::False)),
        bindings.call_log().clone(),
    );
    (bindings, gateway)
}

fn ctx<'a>(bindings: &'a Bindings, gateway: &'a Gateway, variant: Variant) -> AttackContext<'a> {
    AttackContext {
        bindings,
        gateway,
        thresholds: Thresholds::default(),
        variant,
        budget_limit: 10,
        skip_victim_on_constraint_failure: false,
    }
}

#[test]
fn criterion_algorithm1_state_machine() {
    let started = Instant::now();
    let c = claim("c1", "the measure cut spending");

    for flip_at in [1u32, 3, 10] {
        let (bindings, gateway) = world_flipping_at(flip_at);
        let transcript = run_attack(&c, &ctx(&bindings, &gateway, Variant::FullHistory));
        assert_eq!(transcript.status, AttackStatus::Succeeded(flip_at), "flip_at={flip_at}");
        assert_eq!(transcript.queries_used, flip_at, "exactly one query per iteration");
        assert_eq!(transcript.attempts.len(), flip_at as usize);
        assert_eq!(
            gateway_queries(&bindings),
            flip_at as usize,
            "detector call count must equal iterations"
        );
        // Earlier attempts each fail at least one conjunct.
        for attempt in &transcript.attempts[..flip_at as usize - 1] {
            assert!(!accept(&attempt.evaluation, attempt.attack_success));
        }
    }

    let (bindings, gateway) = never_flip_world();
    let transcript = run_attack(&c, &ctx(&bindings, &gateway, Variant::FullHistory));
    assert_eq!(transcript.status, AttackStatus::ExhaustedBudget);
    assert_eq!(transcript.queries_used, 10);
    assert_eq!(transcript.attempts.len(), 10);

    assert!(started.elapsed().as_secs() < 5, "state-machine suite must finish in < 5 s");
    pass("algorithm-1 state machine (flip at 1/3/10, exhaustion at 10)");
}

fn gateway_queries(bindings: &Bindings) -> usize {
    bindings.call_log().count(&CallKind::DetectorQuery)
}

#[test]
fn criterion_variant_contracts() {
    let claims: Vec<Claim> =
        (0..5).map(|i| claim(&format!("c{i}"), "the measure cut spending")).collect();

    // Full history: the j-th optimizer call for a claim carries j records.
    let (bindings, gateway) = never_flip_world();
    let config = CampaignConfig::new("full", Variant::FullHistory);
    run_campaign(&claims, &config, &bindings, &gateway).unwrap();
    let log = bindings.call_log().snapshot();
    for c in &claims {
        let contexts: Vec<&str> = log
            .iter()
            .filter(|r| {
                r.kind == CallKind::Chat(ProviderRole::OptimizerLlm)
                    && r.trace_id.starts_with(&format!("{}/", c.id))
            })
            .map(|r| r.user.as_deref().unwrap())
            .collect();
        assert_eq!(contexts.len(), 9, "optimizer runs after every failed iteration but the last");
        for (j, ctx_text) in contexts.iter().enumerate() {
            let records = ctx_text.matches("\"iteration\":").count();
            assert_eq!(records, j + 1, "full-history context after iteration {}", j + 1);
        }
    }

    // Previous only: always exactly one record.
    let (bindings, gateway) = never_flip_world();
    let config = CampaignConfig::new("prev", Variant::PreviousOnly);
    run_campaign(&claims, &config, &bindings, &gateway).unwrap();
    let log = bindings.call_log().snapshot();
    let optimizer_contexts: Vec<&str> = log
        .iter()
        .filter(|r| r.kind == CallKind::Chat(ProviderRole::OptimizerLlm))
        .map(|r| r.user.as_deref().unwrap())
        .collect();
    assert_eq!(optimizer_contexts.len(), 5 * 9);
    for ctx_text in optimizer_contexts {
        assert_eq!(ctx_text.matches("\"iteration\":").count(), 1);
    }

    // Attacker only: zero optimizer calls across the whole campaign.
    let (bindings, gateway) = never_flip_world();
    let config = CampaignConfig::new("attacker", Variant::AttackerOnly);
    run_campaign(&claims, &config, &bindings, &gateway).unwrap();
    assert_eq!(bindings.call_log().count(&CallKind::Chat(ProviderRole::OptimizerLlm)), 0);

    pass("variant contracts (full=t records, prev=1 record, attacker-only=0 calls)");
}

#[test]
fn criterion_temperature_schedule() {
    let schedule: Vec<f64> = (1..=10).map(temperature_for).collect();
    assert_eq!(schedule, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5]);
    pass("temperature schedule [1.0 x5, 1.1, 1.2, 1.3, 1.4, 1.5]");
}

// --- independent oracles -----------------------------------------------

/// Textbook exponential recursion for edit distance.
fn levenshtein_oracle(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((ca, ra)), Some((cb, rb))) => {
            let sub = levenshtein_oracle(ra, rb) + usize::from(ca != cb);
            let del = levenshtein_oracle(ra, b) + 1;
            let ins = levenshtein_oracle(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

fn forest_nodes(forest: &[TreeNode]) -> usize {
    forest.iter().map(TreeNode::node_count).sum()
}

/// Exhaustive forest edit distance by direct recursion over all edit
/// mappings (rightmost-root decomposition), independent of the key-root DP.
fn tree_distance_oracle(f1: &[TreeNode], f2: &[TreeNode]) -> usize {
    if f1.is_empty() {
        return forest_nodes(f2);
    }
    if f2.is_empty() {
        return forest_nodes(f1);
    }
    let (r1, rest1) = f1.split_last().unwrap();
    let (r2, rest2) = f2.split_last().unwrap();

    // Delete the rightmost root of f1: its children join the forest.
    let mut spliced1 = rest1.to_vec();
    spliced1.extend(r1.children.iter().cloned());
    let delete = 1 + tree_distance_oracle(&spliced1, f2);

    // Insert the rightmost root of f2.
    let mut spliced2 = rest2.to_vec();
    spliced2.extend(r2.children.iter().cloned());
    let insert = 1 + tree_distance_oracle(f1, &spliced2);

    // Match the rightmost roots.
    let relabel = usize::from(r1.label != r2.label)
        + tree_distance_oracle(&r1.children, &r2.children)
        + tree_distance_oracle(rest1, rest2);

    delete.min(insert).min(relabel)
}

fn random_string(rng: &mut SplitMix64, max_len: usize) -> String {
    let len = rng.next_below(max_len as u64 + 1) as usize;
    (0..len).map(|_| char::from(b'a' + rng.next_below(3) as u8)).collect()
}

fn random_tree(rng: &mut SplitMix64, max_nodes: u64) -> TreeNode {
    let n = 1 + rng.next_below(max_nodes);
    let labels = ["A", "B", "C"];
    let mut nodes: Vec<TreeNode> =
        (0..n).map(|_| TreeNode::leaf(labels[rng.next_below(3) as usize])).collect();
    // Attach nodes 1..n to a random earlier node, building an ordered tree.
    for i in (1..n as usize).rev() {
        let parent = rng.next_below(i as u64) as usize;
        let child = nodes.remove(i);
        nodes[parent].children.push(child);
    }
    nodes.into_iter().next().unwrap()
}

#[test]
fn criterion_metric_oracles() {
    let started = Instant::now();

    let mut rng = SplitMix64::new(0xacce97);
    for _ in 0..1000 {
        let a = random_string(&mut rng, 8);
        let b = random_string(&mut rng, 8);
        let fast = levenshtein(&a, &b);
        let slow = levenshtein_oracle(&a.chars().collect::<Vec<_>>(), &b.chars().collect::<Vec<_>>());
        assert_eq!(fast, slow, "levenshtein({a:?}, {b:?})");
    }

    for i in 0..500 {
        let t1 = random_tree(&mut rng, 5);
        let t2 = random_tree(&mut rng, 5);
        let fast = tree_edit_distance(&t1, &t2);
        let slow = tree_distance_oracle(std::slice::from_ref(&t1), std::slice::from_ref(&t2));
        assert_eq!(fast, slow, "tree pair {i}: {t1:?} vs {t2:?}");
    }

    let flesch = flesch_reading_ease("The cat sat.").unwrap();
    assert!((flesch - 119.19).abs() < 1e-9, "flesch: {flesch}");

    let cosine = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((cosine - 0.974_631_846).abs() < 1e-9, "cosine: {cosine}");

    assert!(started.elapsed().as_secs() < 60, "oracle suite must finish in < 60 s");
    pass("metric oracles (levenshtein x1000, tree distance x500, flesch, cosine)");
}

#[test]
fn criterion_accounting_arithmetic() {
    // Published defense row: 30.35 -> 10.57 must read as a 65.18 % reduction.
    let r = reduction_pct(30.35, 10.57);
    assert!((r - 65.18).abs() < 0.01, "{r}");

    // Fuzzed transcripts: curves are non-decreasing and end at the ASR.
    let mut rng = SplitMix64::new(0xc0);
    for _ in 0..1000 {
        let budget = 1 + rng.next_below(10) as u32;
        let count = 1 + rng.next_below(40) as usize;
        let transcripts: Vec<AttackTranscript> = (0..count)
            .map(|i| {
                let roll = rng.next_below(10);
                let status = if roll < 4 {
                    AttackStatus::Succeeded(1 + rng.next_below(u64::from(budget)) as u32)
                } else if roll < 9 {
                    AttackStatus::ExhaustedBudget
                } else {
                    AttackStatus::Aborted(1 + rng.next_below(u64::from(budget)) as u32)
                };
                AttackTranscript {
                    claim: Claim::new(format!("c{i}"), "text", BinaryLabel::False, Verifiability::Possible)
                        .unwrap(),
                    attempts: vec![],
                    status,
                    queries_used: 0,
                    variant: Variant::FullHistory,
                    notes: vec![],
                }
            })
            .collect();
        let curve = cumulative_success_by_iteration(&transcripts, budget);
        assert_eq!(curve.len(), budget as usize);
        assert!(curve.windows(2).all(|w| w[0] <= w[1]), "curve must be non-decreasing");
        match attack_success_rate(&transcripts) {
            Ok(asr) => assert!((curve[budget as usize - 1] - asr).abs() < 1e-9),
            Err(_) => assert!(curve.iter().all(|&v| v == 0.0)),
        }
    }
    pass("accounting arithmetic (65.18 % reduction row, 1000 fuzzed curves)");
}

#[test]
fn criterion_thresholds_and_acceptance() {
    let started = Instant::now();

    // >= at the exact published boundary values.
    let th = Thresholds::default();
    assert_eq!((th.tau_mpnet, th.tau_bert), (0.61, 0.77));
    let boundary = EvaluationReport::from_scores(0.61, 0.77, true, true, &th);
    assert!(boundary.sim_mpnet_pass && boundary.sim_bert_pass);
    assert!(accept(&boundary, true));
    assert!(!accept(&boundary, false));

    // Synthetic 200-pair annotation set: humans approve iff both scores
    // clear hidden cutoffs; a few judge-rejected pairs salt the grid.
    let mut rng = SplitMix64::new(0x5e1ec7);
    let pairs: Vec<AnnotatedPair> = (0..200)
        .map(|i| {
            let sim_mpnet = rng.next_below(1000) as f64 / 1000.0;
            let sim_bert = rng.next_below(1000) as f64 / 1000.0;
            let judges = rng.next_below(10) != 0;
            let human = sim_mpnet >= 0.55 && sim_bert >= 0.70;
            AnnotatedPair {
                original: format!("original {i}"),
                rewrite: format!("rewrite {i}"),
                sim_mpnet,
                sim_bert,
                judge_coherence: judges,
                judge_semantic: judges,
                human_votes: vec![HumanVote { coherent: human, equivalent: human }; 3],
            }
        })
        .collect();

    let result = select_thresholds(&pairs).unwrap();
    assert_eq!(result.false_positive_count, 0);

    // Independent exhaustive grid check of zero-FP optimality.
    let accepts = |p: &AnnotatedPair, tm: f64, tb: f64| {
        p.sim_mpnet >= tm && p.sim_bert >= tb && p.judge_coherence && p.judge_semantic
    };
    let human_ok = |p: &AnnotatedPair| {
        p.human_votes.iter().filter(|v| v.coherent && v.equivalent).count() * 2 > p.human_votes.len()
    };
    let chosen_fp = pairs.iter().filter(|p| !human_ok(p) && accepts(p, result.tau_mpnet, result.tau_bert)).count();
    let chosen_accepted =
        pairs.iter().filter(|p| human_ok(p) && accepts(p, result.tau_mpnet, result.tau_bert)).count();
    assert_eq!(chosen_fp, 0);
    assert_eq!(chosen_accepted, result.accepted_count);

    let mut best_anywhere = 0usize;
    for tm in pairs.iter().map(|p| p.sim_mpnet) {
        for tb in pairs.iter().map(|p| p.sim_bert) {
            let fp = pairs.iter().filter(|p| !human_ok(p) && accepts(p, tm, tb)).count();
            if fp == 0 {
                let acc = pairs.iter().filter(|p| human_ok(p) && accepts(p, tm, tb)).count();
                best_anywhere = best_anywhere.max(acc);
            }
        }
    }
    assert_eq!(result.accepted_count, best_anywhere, "selection must be maximal");

    assert!(started.elapsed().as_secs() < 10, "threshold search must finish in < 10 s");
    pass("thresholds and acceptance (boundary >=, zero-FP maximal selection on 200 pairs)");
}

#[test]
fn criterion_fleiss_kappa() {
    let unanimous = vec![vec![3, 0], vec![0, 3], vec![3, 0], vec![0, 3], vec![0, 3]];
    assert_eq!(fleiss_kappa(&unanimous).unwrap(), 1.0);

    // Hand computation: P_bar = 11/15, P_e = 13/25, kappa = 4/9.
    let table = vec![vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3], vec![3, 0]];
    let k = fleiss_kappa(&table).unwrap();
    assert!((k - 4.0 / 9.0).abs() < 1e-9, "{k}");
    pass("fleiss kappa (unanimous = 1.0 exact, 3-rater table = 4/9)");
}

#[test]
fn criterion_label_mapping_and_dataset() {
    // The six labels partition 3 false / 3 true.
    let mapped: Vec<BinaryLabel> = SixWayLabel::ALL.iter().copied().map(map_to_binary).collect();
    assert_eq!(mapped.iter().filter(|&&l| l == BinaryLabel::False).count(), 3);
    assert_eq!(mapped.iter().filter(|&&l| l == BinaryLabel::True).count(), 3);

    // Synthetic corpus with the published label and verifiability marginals.
    let label_blocks: [(&str, usize); 6] = [
        ("pants-fire", 359),
        ("false", 1067),
        ("mostly-false", 237),
        ("half-true", 147),
        ("mostly-true", 99),
        ("true", 48),
    ];
    let ver_blocks: [(&str, usize); 3] = [("possible", 927), ("hard", 581), ("impossible", 449)];
    let labels: Vec<&str> =
        label_blocks.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n)).collect();
    let vers: Vec<&str> = ver_blocks.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect();
    assert_eq!(labels.len(), 1957);
    assert_eq!(vers.len(), 1957);

    let mut csv = String::from("id,text,label,verifiability\n");
    for (i, (label, ver)) in labels.iter().zip(&vers).enumerate() {
        csv.push_str(&format!("s{i},statement number {i} about policy,{label},{ver}\n"));
    }
    let claims = load_claims(csv.as_bytes(), ClaimFormat::DelimitedTable).unwrap();
    assert_eq!(claims.len(), 1957);
    assert_eq!(claims.iter().filter(|c| c.truth_label == BinaryLabel::False).count(), 1663);
    assert_eq!(claims.iter().filter(|c| c.truth_label == BinaryLabel::True).count(), 294);
    assert_eq!(claims.iter().filter(|c| c.verifiability == Verifiability::Impossible).count(), 449);

    // Filtering the impossible class leaves the 1508-claim pool; a 500-claim
    // draw is deterministic.
    let exclude: BTreeSet<Verifiability> = [Verifiability::Impossible].into();
    let pool = claims.iter().filter(|c| !exclude.contains(&c.verifiability)).count();
    assert_eq!(pool, 1508);
    let a = filter_and_sample(&claims, &exclude, 500, 7).unwrap();
    let b = filter_and_sample(&claims, &exclude, 500, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 500);
    assert!(a.iter().all(|c| c.verifiability != Verifiability::Impossible));

    pass("label mapping and dataset (3/3 partition, 1663/294 counts, 1508 pool)");
}

#[test]
fn criterion_defense_harness() {
    fn winning(id: &str, rewrite: &str) -> AttackTranscript {
        AttackTranscript {
            claim: claim(id, "the measure cut spending"),
            attempts: vec![RewriteAttempt {
                iteration: 1,
                rewrite_text: rewrite.to_owned(),
                evaluation: EvaluationReport::from_scores(0.9, 0.9, true, true, &Thresholds::default()),
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
    let transcripts = vec![
        winning("a", "the measure reportedly cut spending."),
        winning("b", "the measure reportedly cut spending twice."),
    ];
    let detector =
        ScriptedDetector::constant(RawVerdict::False).with_substring("reportedly", RawVerdict::True);

    // Identity simplifier: nothing changes, 0 % reduction.
    let identity = Bindings::builder()
        .chat(ProviderRole::SimplifierLlm, Arc::new(ScriptedChat::echo()))
        .build();
    let gateway = Gateway::new(Arc::new(detector.clone()), identity.call_log().clone());
    let report = defend_and_rescore(&transcripts, 40.0, &gateway, &identity).unwrap();
    assert_eq!(report.reduction_pct, 0.0);
    assert_eq!(report.asr_after, 40.0);
    assert_eq!(gateway_queries(&identity), 2, "exactly one detector query per defended sample");

    // Hedge-stripping simplifier: every attack un-flips, 100 % reduction.
    let stripper = Bindings::builder()
        .chat(
            ProviderRole::SimplifierLlm,
            Arc::new(ScriptedChat::strip_tokens(vec!["reportedly".into()])),
        )
        .build();
    let gateway = Gateway::new(Arc::new(detector), stripper.call_log().clone());
    let report = defend_and_rescore(&transcripts, 40.0, &gateway, &stripper).unwrap();
    assert_eq!(report.reduction_pct, 100.0);
    assert_eq!(report.asr_after, 0.0);
    assert_eq!(gateway_queries(&stripper), 2);

    pass("defense harness (identity = 0 %, hedge-strip = 100 %, one query per sample)");
}

#[test]
fn criterion_end_to_end_scripted_replay() {
    let csv = include_str!("fixtures/replay_claims.csv");
    let claims = load_claims(csv.as_bytes(), ClaimFormat::DelimitedTable).unwrap();
    assert_eq!(claims.len(), 10);

    let run_once = || {
        // Even-indexed claims get a hedged rewrite immediately (flip at
        // iteration 1); claim o1 flips once the optimizer advances the
        // phase marker; the remaining odd claims stay plain and exhaust.
        let mut attacker_rules = vec![ChatRule {
            system_contains: Some("PHASE-2~".into()),
            user_contains: Some("keyword-o1".into()),
            response: "statement keyword-o1 holds today reportedly".into(),
        }];
        for even in [0, 2, 4, 6, 8] {
            attacker_rules.push(ChatRule {
                system_contains: None,
                user_contains: Some(format!("keyword-e{even}")),
                response: format!("statement keyword-e{even} holds today reportedly"),
            });
        }
        for odd in [1, 3, 5, 7, 9] {
            attacker_rules.push(ChatRule {
                system_contains: None,
                user_contains: Some(format!("keyword-o{odd}")),
                response: format!("statement keyword-o{odd} holds today plainly"),
            });
        }
        let optimizer = ScriptedChat::constant(
            r#"{"analysis": {"diagnosis": "keep hedging"}, "system_prompt": "You are a claim perturbation tool. PHASE-2~"}"#,
        );
        let bindings = Bindings::builder()
            .chat(ProviderRole::AttackerLlm, Arc::new(ScriptedChat::rules(attacker_rules, None)))
            .chat(ProviderRole::OptimizerLlm, Arc::new(optimizer))
            .chat(ProviderRole::SemanticJudge, Arc::new(ScriptedChat::constant(YES)))
            .chat(ProviderRole::CoherenceJudge, Arc::new(ScriptedChat::constant(YES)))
            .embedder(Arc::new(TrigramEmbedder::default()))
            .token_similarity(Arc::new(ExactMatchTokenF1))
            .build();
        let detector = ScriptedDetector::constant(RawVerdict::False)
            .with_substring("reportedly", RawVerdict::True);
        let gateway = Gateway::new(Arc::new(detector), bindings.call_log().clone());

        let mut config = CampaignConfig::new("replay", Variant::PreviousOnly);
        config.seed = 42;
        config.parallelism = 2;
        let result = run_campaign(&claims, &config, &bindings, &gateway).unwrap();
        let mut bytes = Vec::new();
        write_transcripts(&mut bytes, &result.transcripts).unwrap();
        (bytes, result)
    };

    let (bytes_a, result_a) = run_once();
    let (bytes_b, _) = run_once();
    assert_eq!(bytes_a, bytes_b, "two runs must produce byte-identical transcripts");
    assert!(!bytes_a.is_empty());

    // Mixed outcomes: instant flips, one optimizer-driven flip, exhaustions.
    assert_eq!(result_a.transcripts.len(), 10, "all claims are baseline-correct");
    let succeeded_at_1 = result_a
        .transcripts
        .iter()
        .filter(|t| t.status == AttackStatus::Succeeded(1))
        .count();
    let succeeded_at_2 = result_a
        .transcripts
        .iter()
        .filter(|t| t.status == AttackStatus::Succeeded(2))
        .count();
    let exhausted = result_a
        .transcripts
        .iter()
        .filter(|t| t.status == AttackStatus::ExhaustedBudget)
        .count();
    assert_eq!((succeeded_at_1, succeeded_at_2, exhausted), (5, 1, 4));

    pass("end-to-end scripted replay (10 claims, byte-identical transcripts.jsonl)");
}
