//! Comparison battery for original vs adversarial corpora: lexical,
//! syntactic/structural, and stylistic measurements.

mod readability;
mod tfidf;
mod tree;

pub use readability::{count_syllables, flesch_reading_ease, split_sentences, text_counts, TextCounts};
pub use tfidf::tfidf_contrast;
pub use tree::{build_parse_tree, normalized_tree_edit_distance, tree_edit_distance, TreeNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{Bindings, ProviderError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("text contains no words")]
    NoWords,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("metric failed for pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<MetricsError>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Minimum number of single-character insertions, deletions, or
/// substitutions turning `a` into `b`, over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            let next = (diag + cost).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Aggregate comparison over paired (original, adversarial) texts. Pair
/// metrics (BERTScore-style F1, Levenshtein, tree distance) relate the two
/// sides; per-text metrics (length, perplexity, reading ease) describe the
/// adversarial side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub mean_bertscore: f64,
    pub mean_levenshtein: f64,
    /// Mean normalized tree edit distance (distance / larger node count).
    pub mean_tree_distance: f64,
    pub mean_length_chars: f64,
    pub mean_perplexity: f64,
    pub mean_flesch: f64,
    pub tfidf_top_terms: (Vec<String>, Vec<String>),
}

/// Compute the full battery over paired texts.
///
/// Token similarity and perplexity come from the bound providers; tree
/// distance uses the shallow parse proxy.
pub fn compare_corpora(
    pairs: &[(String, String)],
    bindings: &Bindings,
    tfidf_k: usize,
) -> Result<ComparisonReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = pairs.len() as f64;
    let mut sums = [0.0f64; 6];
    for (index, (original, adversarial)) in pairs.iter().enumerate() {
        let tag = |source: MetricsError| MetricsError::Pair { index, source: Box::new(source) };
        let bert = bindings.token_similarity_f1(adversarial, original).map_err(|e| tag(e.into()))?;
        let lev = levenshtein(original, adversarial) as f64;
        let tree = normalized_tree_edit_distance(
            &build_parse_tree(original),
            &build_parse_tree(adversarial),
        );
        let len = adversarial.chars().count() as f64;
        let ppl = bindings.perplexity(adversarial).map_err(|e| tag(e.into()))?;
        let flesch = flesch_reading_ease(adversarial).map_err(tag)?;
        for (slot, value) in sums.iter_mut().zip([bert, lev, tree, len, ppl, flesch]) {
            *slot += value;
        }
    }
    let originals: Vec<String> = pairs.iter().map(|p| p.0.clone()).collect();
    let adversarials: Vec<String> = pairs.iter().map(|p| p.1.clone()).collect();
    Ok(ComparisonReport {
        mean_bertscore: sums[0] / n,
        mean_levenshtein: sums[1] / n,
        mean_tree_distance: sums[2] / n,
        mean_length_chars: sums[3] / n,
        mean_perplexity: sums[4] / n,
        mean_flesch: sums[5] / n,
        tfidf_top_terms: tfidf_contrast(&originals, &adversarials, tfidf_k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{ExactMatchTokenF1, UniformPerplexity};
    use std::sync::Arc;

    fn bindings() -> Bindings {
        Bindings::builder()
            .token_similarity(Arc::new(ExactMatchTokenF1))
            .perplexity(Arc::new(UniformPerplexity::new(50)))
            .build()
    }

    #[test]
    fn levenshtein_known_cases() {
        assert_eq!(levenshtein("", ""), 0);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("café", "cafe"), 1);
    }

    #[test]
    fn identity_pair_reports_zero_distance() {
        let pairs = vec![("The cat sat.".to_string(), "The cat sat.".to_string())];
        let report = compare_corpora(&pairs, &bindings(), 3).unwrap();
        assert_eq!(report.mean_levenshtein, 0.0);
        assert_eq!(report.mean_tree_distance, 0.0);
        assert_eq!(report.mean_bertscore, 1.0);
        assert_eq!(report.mean_perplexity, 50.0);
    }

    #[test]
    fn mean_levenshtein_averages_pairs() {
        let pairs = vec![
            ("ab cd.".to_string(), "ab ce.".to_string()),   // distance 1
            ("ab cd.".to_string(), "ab cefg.".to_string()), // distance 3
        ];
        let report = compare_corpora(&pairs, &bindings(), 3).unwrap();
        assert_eq!(report.mean_levenshtein, 2.0);
    }

    #[test]
    fn empty_pair_list_is_an_error() {
        assert!(matches!(compare_corpora(&[], &bindings(), 3), Err(MetricsError::EmptyCorpus)));
    }

    #[test]
    fn pair_errors_carry_the_pair_index() {
        let pairs = vec![
            ("fine text here.".to_string(), "fine rewrite here.".to_string()),
            ("ok.".to_string(), "single".to_string()), // perplexity needs 2 tokens
        ];
        let err = compare_corpora(&pairs, &bindings(), 3).unwrap_err();
        assert!(matches!(err, MetricsError::Pair { index: 1, .. }), "{err}");
    }
}
