//! Sentence segmentation, syllable counting, and the Flesch Reading Ease
//! score.
//!
//! Score = `206.835 - 1.015 * (words/sentences) - 84.6 * (syllables/words)`.
//!
//! The splitter and syllable heuristic below are the module's documented,
//! bit-stable reference behaviour:
//!
//! - Sentences end at a token whose trailing punctuation is `!` or `?`, or
//!   `.` unless the token is a guarded abbreviation (single letter, internal
//!   period as in `u.s.`, or on the guard list). Trailing text without
//!   terminal punctuation still counts as a sentence if it contains a word.
//! - Words are whitespace tokens containing at least one alphanumeric
//!   character.
//! - Syllables per word: count maximal `[aeiouy]` groups over the word's
//!   alphabetic characters, subtract one for a final silent `e` (consonant-
//!   `le` endings keep theirs), minimum one.

use super::MetricsError;

/// Abbreviations whose trailing period does not end a sentence
/// (compared lowercased, period stripped).
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sen", "rep", "gov", "gen", "sgt", "col", "lt", "st", "vs",
    "etc", "inc", "ltd", "co", "corp", "no", "dept", "approx", "jan", "feb", "mar", "apr", "jun",
    "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

fn ends_sentence(token: &str) -> bool {
    let t = token.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}', '»']);
    if t.ends_with('!') || t.ends_with('?') {
        return true;
    }
    if !t.ends_with('.') {
        return false;
    }
    let core = t.trim_end_matches('.');
    let lc: String = core.to_lowercase();
    if lc.is_empty() {
        // A bare "." / "..." token closes the sentence.
        return true;
    }
    let single_initial = lc.chars().count() == 1 && lc.chars().all(char::is_alphabetic);
    !(single_initial || lc.contains('.') || ABBREVIATIONS.contains(&lc.as_str()))
}

/// Split text into sentences (each a vector of raw tokens).
pub fn split_sentences(text: &str) -> Vec<Vec<&str>> {
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for token in text.split_whitespace() {
        current.push(token);
        if ends_sentence(token) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if current.iter().any(|t| is_word(t)) {
        sentences.push(current);
    }
    sentences.retain(|s| s.iter().any(|t| is_word(t)));
    sentences
}

/// Heuristic syllable count for one token.
pub fn count_syllables(token: &str) -> usize {
    let letters: String = token.chars().filter(char::is_ascii_alphabetic).flat_map(char::to_lowercase).collect();
    if letters.is_empty() {
        // Numerals and symbols count as one spoken unit.
        return 1;
    }
    let chars: Vec<char> = letters.chars().collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &chars {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    // Lone final silent 'e' ("gave", "time"), but not "ee"/"ie" endings and
    // not consonant-le ("table", "little") where the 'e' carries a syllable.
    let n = chars.len();
    if groups > 1 && n >= 2 && chars[n - 1] == 'e' && !is_vowel(chars[n - 2]) {
        let consonant_le = n >= 3 && chars[n - 2] == 'l' && !is_vowel(chars[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextCounts {
    pub sentences: usize,
    pub words: usize,
    pub syllables: usize,
}

pub fn text_counts(text: &str) -> TextCounts {
    let sentences = split_sentences(text);
    let mut words = 0usize;
    let mut syllables = 0usize;
    for sentence in &sentences {
        for token in sentence {
            if is_word(token) {
                words += 1;
                syllables += count_syllables(token);
            }
        }
    }
    TextCounts { sentences: sentences.len(), words, syllables }
}

/// Flesch Reading Ease. Higher is easier to read.
pub fn flesch_reading_ease(text: &str) -> Result<f64, MetricsError> {
    let c = text_counts(text);
    if c.words == 0 || c.sentences == 0 {
        return Err(MetricsError::NoWords);
    }
    let words_per_sentence = c.words as f64 / c.sentences as f64;
    let syllables_per_word = c.syllables as f64 / c.words as f64;
    Ok(206.835 - 1.015 * words_per_sentence - 84.6 * syllables_per_word)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_example() {
        // 3 words, 1 sentence, 3 syllables:
        // 206.835 - 1.015*3 - 84.6*1 = 119.19
        let score = flesch_reading_ease("The cat sat.").unwrap();
        assert!((score - 119.19).abs() < 1e-9, "{score}");
    }

    #[test]
    fn repetition_leaves_score_unchanged() {
        let once = flesch_reading_ease("The cat sat on the mat. The dog barked loudly.").unwrap();
        let twice = flesch_reading_ease(
            "The cat sat on the mat. The dog barked loudly. The cat sat on the mat. The dog barked loudly.",
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let sentences = split_sentences("Sen. Raphael Warnock voted. He denied it.");
        assert_eq!(sentences.len(), 2);
        assert_eq!(sentences[0].len(), 4);
    }

    #[test]
    fn internal_period_tokens_do_not_split() {
        let sentences = split_sentences("The U.S. economy grew last year.");
        assert_eq!(sentences.len(), 1);
    }

    #[test]
    fn trailing_fragment_counts_as_sentence() {
        assert_eq!(split_sentences("no terminal punctuation here").len(), 1);
        assert_eq!(text_counts("").sentences, 0);
    }

    #[test]
    fn no_words_is_an_error() {
        assert!(matches!(flesch_reading_ease("?!,"), Err(MetricsError::NoWords)));
    }

    #[test]
    fn syllable_heuristic_cases() {
        assert_eq!(count_syllables("cat"), 1);
        assert_eq!(count_syllables("table"), 2);
        assert_eq!(count_syllables("gave"), 1); // silent e
        assert_eq!(count_syllables("the"), 1); // lone vowel group, floor 1
        assert_eq!(count_syllables("beautiful"), 3); // eau-i-u -> groups eau, i, u
        assert_eq!(count_syllables("42"), 1);
    }

    #[test]
    fn longer_sentences_read_harder() {
        let short = flesch_reading_ease("The cat sat. The dog ran.").unwrap();
        let long = flesch_reading_ease("The cat sat on the mat while the dog ran far.").unwrap();
        assert!(long < short);
    }
}
