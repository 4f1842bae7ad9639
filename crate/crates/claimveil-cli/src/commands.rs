//! Subcommand implementations. Every artifact is JSON, written without
//! timestamps so reruns over the same inputs are byte-identical.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use claimveil::calibration::{select_thresholds, stratified_sample, AnnotatedPair};
use claimveil::defense::defend_and_rescore;
use claimveil::engine::{
    read_transcripts, run_attacks_with_sink, write_transcript_lines, AttackContext,
    CampaignManifest, CampaignResult, CampaignSummary,
};
use claimveil::metrics::{compare_corpora, flesch_reading_ease};
use claimveil::model::{
    load_claims, sample_with_order, AttackStatus, AttackTranscript, Claim,
};
use claimveil::providers::CallLog;

use crate::config::FileConfig;
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn campaign_dir(out_root: &Path, config: &FileConfig) -> PathBuf {
    out_root.join(&config.campaign_id)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).map_err(runtime)?;
    body.push('\n');
    fs::write(path, body).map_err(runtime)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::Runtime(format!("cannot parse {}: {e}", path.display())))
}

fn load_dataset(config: &FileConfig) -> Result<Vec<Claim>, CliError> {
    let dataset = config.dataset.as_ref().expect("validated");
    let file = fs::File::open(&dataset.path)
        .map_err(|e| CliError::Runtime(format!("cannot open dataset {}: {e}", dataset.path.display())))?;
    let claims = load_claims(file, dataset.format).map_err(runtime)?;
    let exclude: BTreeSet<_> = config.sampling.exclude.iter().copied().collect();
    let n = config.sampling.n.unwrap_or_else(|| {
        claims.iter().filter(|c| !exclude.contains(&c.verifiability)).count()
    });
    sample_with_order(&claims, &exclude, n, config.sampling.seed, config.sampling.order)
        .map_err(runtime)
}

pub fn attack(config: &FileConfig, out_root: &Path, resume: bool) -> Result<(), CliError> {
    let dir = campaign_dir(out_root, config);
    fs::create_dir_all(&dir).map_err(runtime)?;
    let transcripts_path = dir.join("transcripts.jsonl");

    let sampled = load_dataset(config)?;
    let log = Arc::new(CallLog::new());
    let bindings = config.build_bindings("attack", log.clone())?;
    let gateway = config.build_gateway(log)?;
    let campaign = config.campaign_config();

    // The in_progress manifest doubles as the resumption marker; it flips to
    // complete only after the transcript sink is flushed.
    let mut manifest = CampaignManifest::new(&campaign, &bindings, &gateway);
    write_json(&dir.join("manifest.json"), &manifest)?;

    // Terminal transcripts never re-consume budget: on resume, previously
    // attacked claims are skipped outright and only the remainder runs.
    let resuming = resume && transcripts_path.exists();
    let existing: Vec<AttackTranscript> = if resuming {
        read_transcripts(std::io::BufReader::new(
            fs::File::open(&transcripts_path).map_err(runtime)?,
        ))
        .map_err(runtime)?
    } else {
        Vec::new()
    };
    let done: BTreeSet<String> = existing.iter().map(|t| t.claim.id.clone()).collect();

    let (baseline_correct, unscored) = claimveil::engine::baseline_pass(&sampled, &gateway);
    let targets: Vec<&Claim> = sampled
        .iter()
        .filter(|c| baseline_correct.contains(&c.id) && !done.contains(&c.id))
        .collect();

    // Stream each finished transcript to disk, so an interrupted campaign
    // keeps everything terminal so far and can resume.
    let file = fs::OpenOptions::new()
        .create(true)
        .append(resuming)
        .truncate(!resuming)
        .write(true)
        .open(&transcripts_path)
        .map_err(runtime)?;
    let mut writer = std::io::BufWriter::new(file);
    let ctx = AttackContext::new(&campaign, &bindings, &gateway);
    let fresh = run_attacks_with_sink(&targets, &ctx, campaign.parallelism, &mut |t| {
        write_transcript_lines(&mut writer, t)?;
        use std::io::Write;
        writer.flush()?;
        Ok(())
    })
    .map_err(runtime)?;
    drop(writer);

    let mut transcripts = existing;
    transcripts.extend(fresh);
    let aborted_ids = transcripts
        .iter()
        .filter(|t| matches!(t.status, AttackStatus::Aborted(_)))
        .map(|t| t.claim.id.clone())
        .collect();
    let asr = claimveil::engine::attack_success_rate(&transcripts).unwrap_or(0.0);
    let cumulative_asr =
        claimveil::engine::cumulative_success_by_iteration(&transcripts, campaign.budget_limit);
    let result = CampaignResult {
        transcripts,
        baseline_correct_ids: baseline_correct,
        unscored_ids: unscored,
        aborted_ids,
        asr,
        cumulative_asr,
    };
    write_json(&dir.join("result.json"), &result.summary())?;

    manifest.status = "complete".into();
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!(
        "campaign {}: attacked {} baseline-correct claims, ASR {:.2}%",
        config.campaign_id,
        result.transcripts.len(),
        result.asr
    );
    Ok(())
}

fn load_campaign(dir: &Path) -> Result<(Vec<AttackTranscript>, CampaignSummary), CliError> {
    let transcripts = read_transcripts(std::io::BufReader::new(
        fs::File::open(dir.join("transcripts.jsonl"))
            .map_err(|e| CliError::Runtime(format!("no transcripts in {}: {e}", dir.display())))?,
    ))
    .map_err(runtime)?;
    let summary: CampaignSummary = read_json(&dir.join("result.json"))?;
    Ok((transcripts, summary))
}

fn winning_pairs(transcripts: &[AttackTranscript]) -> Vec<(String, String)> {
    transcripts
        .iter()
        .filter(|t| matches!(t.status, AttackStatus::Succeeded(_)))
        .map(|t| {
            let rewrite = t.attempts.last().expect("succeeded transcript has attempts");
            (t.claim.text.clone(), rewrite.rewrite_text.clone())
        })
        .collect()
}

pub fn defend(config: &FileConfig, out_root: &Path) -> Result<(), CliError> {
    let dir = campaign_dir(out_root, config);
    let (transcripts, summary) = load_campaign(&dir)?;
    let succeeded: Vec<AttackTranscript> = transcripts
        .into_iter()
        .filter(|t| matches!(t.status, AttackStatus::Succeeded(_)))
        .collect();
    if succeeded.is_empty() {
        return Err(CliError::Runtime("no successful attacks to defend against".into()));
    }

    let log = Arc::new(CallLog::new());
    let bindings = config.build_bindings("defend", log.clone())?;
    let gateway = config.build_gateway(log)?;
    let report = defend_and_rescore(&succeeded, summary.asr, &gateway, &bindings).map_err(runtime)?;
    write_json(&dir.join("defense.json"), &report)?;
    println!(
        "defense over {} samples: ASR {:.2}% -> {:.2}% ({:.2}% reduction)",
        report.samples, report.asr_attack, report.asr_after, report.reduction_pct
    );
    Ok(())
}

/// Comparison artifact: per-text means for the original corpus, the full
/// battery for the adversarial corpus, and the cumulative success curve.
#[derive(Debug, Serialize, Deserialize)]
struct AnalysisArtifact {
    pairs: usize,
    original_mean_length_chars: f64,
    original_mean_perplexity: f64,
    original_mean_flesch: f64,
    adversarial: claimveil::metrics::ComparisonReport,
    cumulative_asr: Vec<f64>,
}

pub fn analyze(config: &FileConfig, out_root: &Path) -> Result<(), CliError> {
    let dir = campaign_dir(out_root, config);
    let (transcripts, summary) = load_campaign(&dir)?;
    let pairs = winning_pairs(&transcripts);
    if pairs.is_empty() {
        return Err(CliError::Runtime("no successful attacks to analyze".into()));
    }

    let bindings = config.build_bindings("analyze", Arc::new(CallLog::new()))?;
    let adversarial =
        compare_corpora(&pairs, &bindings, config.analysis.tfidf_k).map_err(runtime)?;

    let n = pairs.len() as f64;
    let mut length = 0.0;
    let mut perplexity = 0.0;
    let mut flesch = 0.0;
    for (original, _) in &pairs {
        length += original.chars().count() as f64;
        perplexity += bindings.perplexity(original).map_err(runtime)?;
        flesch += flesch_reading_ease(original).map_err(runtime)?;
    }

    let artifact = AnalysisArtifact {
        pairs: pairs.len(),
        original_mean_length_chars: length / n,
        original_mean_perplexity: perplexity / n,
        original_mean_flesch: flesch / n,
        adversarial,
        cumulative_asr: summary.cumulative_asr.clone(),
    };
    write_json(&dir.join("analysis.json"), &artifact)?;

    // Delimited export of the same rows, one line per corpus.
    let csv = format!(
        "corpus,bertscore,levenshtein,tree_distance,length_chars,perplexity,flesch\n\
         original,,,,{:.4},{:.4},{:.4}\n\
         adversarial,{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        artifact.original_mean_length_chars,
        artifact.original_mean_perplexity,
        artifact.original_mean_flesch,
        artifact.adversarial.mean_bertscore,
        artifact.adversarial.mean_levenshtein,
        artifact.adversarial.mean_tree_distance,
        artifact.adversarial.mean_length_chars,
        artifact.adversarial.mean_perplexity,
        artifact.adversarial.mean_flesch,
    );
    fs::write(dir.join("analysis.csv"), csv).map_err(runtime)?;
    println!(
        "analysis over {} pairs: mean token F1 {:.4}, reading ease {:.2} -> {:.2}",
        artifact.pairs,
        artifact.adversarial.mean_bertscore,
        artifact.original_mean_flesch,
        artifact.adversarial.mean_flesch
    );
    Ok(())
}

pub fn calibrate(config: &FileConfig, out_root: &Path) -> Result<(), CliError> {
    let dir = campaign_dir(out_root, config);
    fs::create_dir_all(&dir).map_err(runtime)?;
    let path = config.annotations.as_ref().expect("validated");
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read annotations {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: AnnotatedPair = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("annotations line {}: {e}", i + 1)))?;
        pairs.push(pair);
    }
    if let Some(per_bin) = config.calibration.per_bin {
        pairs = stratified_sample(&pairs, per_bin, config.calibration.seed);
    }
    let result = select_thresholds(&pairs).map_err(runtime)?;
    write_json(&dir.join("calibration.json"), &result)?;
    println!(
        "calibration over {} pairs: tau_mpnet {:.4}, tau_bert {:.4}, {} accepted, {} false positives",
        pairs.len(),
        result.tau_mpnet,
        result.tau_bert,
        result.accepted_count,
        result.false_positive_count
    );
    Ok(())
}

pub fn report(config: &FileConfig, out_root: &Path) -> Result<(), CliError> {
    let dir = campaign_dir(out_root, config);
    let mut lines: Vec<String> = Vec::new();
    lines.push(format!("campaign {}", config.campaign_id));
    lines.push("=".repeat(60));

    if let Ok(manifest) = read_json::<CampaignManifest>(&dir.join("manifest.json")) {
        lines.push(format!("status: {}", manifest.status));
        lines.push(format!("variant: {:?}, budget: {}", manifest.config.variant, manifest.config.budget_limit));
        lines.push(format!("detector: {}", manifest.detector_id));
        lines.push(format!("seed: {} ({})", manifest.config.seed, manifest.rng_algorithm));
    }
    if let Ok(summary) = read_json::<CampaignSummary>(&dir.join("result.json")) {
        lines.push(String::new());
        lines.push(format!(
            "attacked {} claims ({} baseline-correct), {} succeeded",
            summary.attacked,
            summary.baseline_correct_ids.len(),
            summary.succeeded
        ));
        lines.push(format!("attack success rate: {:.2}%", summary.asr));
        let curve = summary
            .cumulative_asr
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{}:{:.1}", i + 1, v))
            .collect::<Vec<_>>()
            .join(" ");
        lines.push(format!("cumulative by budget: {curve}"));
    }
    if let Ok(defense) = read_json::<claimveil::defense::DefenseReport>(&dir.join("defense.json")) {
        lines.push(String::new());
        lines.push(format!(
            "defense: ASR {:.2}% -> {:.2}% ({:.2}% reduction), reading ease {:.2} -> {:.2}",
            defense.asr_attack,
            defense.asr_after,
            defense.reduction_pct,
            defense.reading_ease_attack,
            defense.reading_ease_after
        ));
    }
    if let Ok(analysis) = read_json::<AnalysisArtifact>(&dir.join("analysis.json")) {
        lines.push(String::new());
        lines.push(format!(
            "analysis over {} pairs: token F1 {:.4}, levenshtein {:.1}, tree distance {:.3}",
            analysis.pairs,
            analysis.adversarial.mean_bertscore,
            analysis.adversarial.mean_levenshtein,
            analysis.adversarial.mean_tree_distance
        ));
        lines.push(format!(
            "length {:.1} -> {:.1} chars, flesch {:.2} -> {:.2}, perplexity {:.2} -> {:.2}",
            analysis.original_mean_length_chars,
            analysis.adversarial.mean_length_chars,
            analysis.original_mean_flesch,
            analysis.adversarial.mean_flesch,
            analysis.original_mean_perplexity,
            analysis.adversarial.mean_perplexity
        ));
        lines.push(format!(
            "characteristic terms: original {:?}, adversarial {:?}",
            analysis.adversarial.tfidf_top_terms.0, analysis.adversarial.tfidf_top_terms.1
        ));
    }
    if let Ok(calibration) =
        read_json::<claimveil::calibration::CalibrationResult>(&dir.join("calibration.json"))
    {
        lines.push(String::new());
        lines.push(format!(
            "calibration: tau_mpnet {:.4}, tau_bert {:.4}, kappa coherence {:.3}, kappa equivalence {:.3}",
            calibration.tau_mpnet,
            calibration.tau_bert,
            calibration.kappa_coherence,
            calibration.kappa_equivalence
        ));
    }

    let summary_text = lines.join("\n") + "\n";
    fs::write(dir.join("summary.txt"), &summary_text).map_err(runtime)?;
    print!("{summary_text}");
    Ok(())
}
