//! Two-document TF-IDF contrast between an original corpus and an
//! adversarial corpus.
//!
//! All texts in each corpus are pooled into one document. Term frequency is
//! the raw count; IDF is smoothed: `ln((1 + n_docs) / (1 + df)) + 1` with
//! `n_docs = 2`. Top-k terms per document are ranked by weight, ties broken
//! lexicographically.

use std::collections::BTreeMap;

use super::MetricsError;

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|raw| {
        let core: String = raw
            .trim_matches(|c: char| !c.is_alphanumeric())
            .chars()
            .flat_map(char::to_lowercase)
            .collect();
        (!core.is_empty()).then_some(core)
    })
}

fn term_counts(corpus: &[String]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for text in corpus {
        for t in tokens(text) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

fn top_k(counts: &BTreeMap<String, usize>, other: &BTreeMap<String, usize>, k: usize) -> Vec<String> {
    let mut scored: Vec<(f64, &String)> = counts
        .iter()
        .map(|(term, &tf)| {
            let df = 1 + usize::from(other.contains_key(term));
            let idf = ((1.0 + 2.0) / (1.0 + df as f64)).ln() + 1.0;
            (tf as f64 * idf, term)
        })
        .collect();
    // Weight descending, then term ascending; BTreeMap iteration already
    // yields terms sorted, and the sort below is stable.
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("tf-idf weights are finite"));
    scored.into_iter().take(k).map(|(_, t)| t.clone()).collect()
}

/// Highest-weight terms for each corpus under the two-document scheme.
pub fn tfidf_contrast(
    originals: &[String],
    adversarials: &[String],
    k: usize,
) -> Result<(Vec<String>, Vec<String>), MetricsError> {
    let orig_counts = term_counts(originals);
    let adv_counts = term_counts(adversarials);
    if orig_counts.is_empty() || adv_counts.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    Ok((top_k(&orig_counts, &adv_counts, k), top_k(&adv_counts, &orig_counts, k)))
}
