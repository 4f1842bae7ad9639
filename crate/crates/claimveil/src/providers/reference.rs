//! Reference (offline) scoring providers with exactly specified behaviour.
//!
//! These stand in for the large embedding / token-alignment / language models
//! the live pipeline binds, so every downstream computation stays
//! oracle-checkable at desk scale.

use std::collections::HashMap;

use super::{PerplexityProvider, ProviderError, SentenceEmbedderProvider, TokenSimilarityProvider};

/// Character 3-gram frequency embedder.
///
/// Grams are taken over the Unicode scalar values of the raw text with a
/// sliding window of 3 (texts shorter than 3 characters contribute the whole
/// text as a single gram). Each gram is hashed with FNV-1a 64 into one of
/// `dimension` buckets; the bucket-count vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl SentenceEmbedderProvider for TrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let chars: Vec<char> = text.chars().collect();
        let mut counts = vec![0u32; self.dimension];
        let mut bump = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let bucket = (fnv1a64(s.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1;
        };
        if chars.len() < 3 {
            bump(&chars);
        } else {
            for window in chars.windows(3) {
                bump(window);
            }
        }
        let norm = counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt();
        Ok(counts.iter().map(|&c| f64::from(c) / norm).collect())
    }

    fn identity(&self) -> String {
        format!("reference:trigram-embedder/d{}", self.dimension)
    }
}

/// Greedy token alignment with an exact-match kernel.
///
/// Tokens are lowercased whitespace splits; the alignment count is the
/// multiset intersection. Precision divides by candidate tokens, recall by
/// reference tokens; F1 is their harmonic mean (0 when nothing aligns).
/// Declared rescaling baseline is 0, so the rescaled score equals the raw F1.
#[derive(Debug, Clone, Default)]
pub struct ExactMatchTokenF1;

fn lower_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

impl TokenSimilarityProvider for ExactMatchTokenF1 {
    fn baseline(&self) -> f64 {
        0.0
    }

    fn raw_f1(&self, candidate: &str, reference: &str) -> Result<f64, ProviderError> {
        let cand = lower_tokens(candidate);
        let refr = lower_tokens(reference);
        if cand.is_empty() || refr.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let mut ref_counts: HashMap<&str, usize> = HashMap::new();
        for t in &refr {
            *ref_counts.entry(t.as_str()).or_default() += 1;
        }
        let mut matched = 0usize;
        for t in &cand {
            if let Some(c) = ref_counts.get_mut(t.as_str()) {
                if *c > 0 {
                    *c -= 1;
                    matched += 1;
                }
            }
        }
        if matched == 0 {
            return Ok(0.0);
        }
        let precision = matched as f64 / cand.len() as f64;
        let recall = matched as f64 / refr.len() as f64;
        Ok(2.0 * precision * recall / (precision + recall))
    }

    fn identity(&self) -> String {
        "reference:exact-match-f1/b0".into()
    }
}

/// Uniform unigram language model over a declared vocabulary of size `V`.
///
/// Every token has probability `1/V`, so the exponentiated mean negative
/// log-likelihood of any text that tokenizes to at least two whitespace
/// tokens is exactly `V`.
#[derive(Debug, Clone)]
pub struct UniformPerplexity {
    vocab_size: u32,
}

impl UniformPerplexity {
    pub fn new(vocab_size: u32) -> Self {
        assert!(vocab_size >= 1);
        Self { vocab_size }
    }
}

impl PerplexityProvider for UniformPerplexity {
    fn perplexity(&self, text: &str) -> Result<f64, ProviderError> {
        let tokens = text.split_whitespace().count();
        if tokens < 2 {
            return Err(ProviderError::TextTooShort(format!(
                "perplexity needs >= 2 tokens, got {tokens}"
            )));
        }
        // Every token costs ln(V), so exp(mean nll) = V exactly.
        Ok(f64::from(self.vocab_size))
    }

    fn identity(&self) -> String {
        format!("reference:uniform-perplexity/v{}", self.vocab_size)
    }
}
