//! External-text preparation: select, length-filter, mix with duplicated
//! transcripts, re-segment into characters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::select::{select_scored, ScoredSentence, SelectionConfig};

fn char_len(s: &str) -> usize {
    s.chars().filter(|c| !c.is_whitespace()).count()
}

/// Keeps sentences of at most `max_len` characters, in order.
pub fn filter_by_length<S: AsRef<str>>(sentences: &[S], max_len: usize) -> Vec<String> {
    assert!(max_len >= 1, "max_len must be at least 1");
    sentences
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| char_len(s) <= max_len)
        .map(str::to_string)
        .collect()
}

/// External sentences plus `dup` copies of each transcript, shuffled by `seed`.
pub fn mix_with_duplication<S: AsRef<str>, T: AsRef<str>>(
    external: &[S],
    transcripts: &[T],
    dup: usize,
    seed: u64,
) -> Vec<String> {
    assert!(dup >= 1, "dup must be at least 1");
    let mut out: Vec<String> = external.iter().map(|s| s.as_ref().to_string()).collect();
    for _ in 0..dup {
        out.extend(transcripts.iter().map(|t| t.as_ref().to_string()));
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Drops word boundaries so every character is one modeling unit.
pub fn resegment(sentence: &str) -> String {
    sentence.chars().filter(|c| !c.is_whitespace()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    pub top_n: usize,
    pub max_len: usize,
    pub dup: usize,
    pub seed: u64,
    pub selection: SelectionConfig,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            top_n: 3_000_000,
            max_len: 50,
            dup: 10,
            seed: 0,
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedText {
    /// Selection output, best first, before length filtering.
    pub selected: Vec<ScoredSentence>,
    /// Final LM training text, one re-segmented sentence per entry.
    pub sentences: Vec<String>,
}

pub fn prepare_lm_text<S: AsRef<str>, T: AsRef<str>>(
    external: &[S],
    transcripts: &[T],
    config: &PrepConfig,
) -> PreparedText {
    let selected = if transcripts.is_empty() {
        Vec::new()
    } else {
        select_scored(external, transcripts, config.top_n, &config.selection)
    };
    let texts: Vec<&str> = selected.iter().map(|s| s.text.as_str()).collect();
    let kept = filter_by_length(&texts, config.max_len);
    let mixed = mix_with_duplication(&kept, transcripts, config.dup, config.seed);
    let sentences = mixed.iter().map(|s| resegment(s)).filter(|s| !s.is_empty()).collect();
    PreparedText { selected, sentences }
}
