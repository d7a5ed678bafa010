//! Cross-entropy-difference sentence selection (Moore & Lewis).
//!
//! Each external sentence gets `H_in(s) - H_out(s)`, the per-character
//! cross-entropy under an in-domain character n-gram minus that under an
//! n-gram trained on a random sample of the external pool. Low scores look
//! in-domain.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BOUNDARY: char = '\u{0}';

/// Add-one smoothed character n-gram with sentence boundaries.
#[derive(Debug, Clone)]
pub struct CharNgramScorer {
    order: usize,
    vocab_size: usize,
    context_counts: HashMap<Vec<char>, f64>,
    ngram_counts: HashMap<Vec<char>, f64>,
}

impl CharNgramScorer {
    /// `vocab_size` must cover every symbol that will be scored, plus the
    /// end-of-sentence symbol.
    pub fn train<S: AsRef<str>>(sentences: &[S], order: usize, vocab_size: usize) -> Self {
        assert!(order >= 1 && vocab_size >= 1);
        let mut context_counts = HashMap::new();
        let mut ngram_counts = HashMap::new();
        for s in sentences {
            let padded = pad(s.as_ref(), order);
            for w in padded.windows(order) {
                *ngram_counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
                *context_counts.entry(w[..order - 1].to_vec()).or_insert(0.0) += 1.0;
            }
        }
        CharNgramScorer {
            order,
            vocab_size,
            context_counts,
            ngram_counts,
        }
    }

    /// Mean negative log-probability per predicted symbol (characters + end).
    pub fn cross_entropy(&self, sentence: &str) -> f64 {
        let padded = pad(sentence, self.order);
        let windows = padded.windows(self.order);
        let n = windows.len() as f64;
        let total: f64 = windows
            .map(|w| {
                let c = self.ngram_counts.get(w).copied().unwrap_or(0.0);
                let h = self.context_counts.get(&w[..self.order - 1]).copied().unwrap_or(0.0);
                -((c + 1.0) / (h + self.vocab_size as f64)).ln()
            })
            .sum();
        total / n
    }
}

fn pad(s: &str, order: usize) -> Vec<char> {
    let mut v = vec![BOUNDARY; order - 1];
    v.extend(s.chars().filter(|c| !c.is_whitespace()));
    v.push('\u{1}');
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub score: f64,
    pub text: String,
    /// Position in the external pool.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// N-gram order of both scorers.
    pub order: usize,
    /// Size of the random external sample for the out-of-domain scorer;
    /// defaults to the in-domain sentence count.
    pub out_sample_size: Option<usize>,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            order: 2,
            out_sample_size: None,
            seed: 0,
        }
    }
}

/// All external sentences scored, sorted ascending by score (ties by index),
/// truncated to `top_n`.
pub fn select_scored<S: AsRef<str>, T: AsRef<str>>(
    external: &[S],
    in_domain: &[T],
    top_n: usize,
    config: &SelectionConfig,
) -> Vec<ScoredSentence> {
    if top_n == 0 || external.is_empty() {
        return Vec::new();
    }
    let mut symbols: std::collections::HashSet<char> = std::collections::HashSet::new();
    for s in external.iter().map(AsRef::as_ref).chain(in_domain.iter().map(AsRef::as_ref)) {
        symbols.extend(s.chars().filter(|c| !c.is_whitespace()));
    }
    let vocab_size = symbols.len() + 1;

    let in_lm = CharNgramScorer::train(in_domain, config.order, vocab_size);
    let sample_size = config
        .out_sample_size
        .unwrap_or(in_domain.len())
        .clamp(1, external.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = sample(&mut rng, external.len(), sample_size).into_vec();
    picked.sort_unstable();
    let out_sample: Vec<&str> = picked.iter().map(|&i| external[i].as_ref()).collect();
    let out_lm = CharNgramScorer::train(&out_sample, config.order, vocab_size);

    let mut scored: Vec<ScoredSentence> = external
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let s = s.as_ref();
            ScoredSentence {
                score: in_lm.cross_entropy(s) - out_lm.cross_entropy(s),
                text: s.to_string(),
                index,
            }
        })
        .collect();
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.index.cmp(&b.index)));
    scored.truncate(top_n);
    scored
}

/// The `top_n` most in-domain-looking external sentences, best first.
/// Panics if `in_domain` is empty.
pub fn select_by_cross_entropy<S: AsRef<str>, T: AsRef<str>>(
    external: &[S],
    in_domain: &[T],
    top_n: usize,
) -> Vec<String> {
    assert!(!in_domain.is_empty(), "in-domain text is required for selection");
    select_scored(external, in_domain, top_n, &SelectionConfig::default())
        .into_iter()
        .map(|s| s.text)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn trivial_cases() {
        let ind = ["abc"];
        assert!(select_by_cross_entropy(&["xyz", "abc"], &ind, 0).is_empty());
        assert_eq!(select_by_cross_entropy(&["qqq"], &ind, 5), vec!["qqq".to_string()]);
    }

    #[test]
    fn returns_everything_sorted_when_top_n_too_large() {
        let ext = ["abcabc", "zzqz", "abab"];
        let out = select_scored(&ext, &["abcab", "cabca"], 10, &SelectionConfig::default());
        assert_eq!(out.len(), 3);
        assert!(out.windows(2).all(|w| w[0].score <= w[1].score));
    }

    #[test]
    fn in_domain_duplicates_rank_before_random_strings() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let in_domain: Vec<String> = (0..30)
            .map(|i| ["the cat sat", "a cat ran", "the dog sat", "a dog ran"][i % 4].to_string())
            .collect();
        let random: Vec<String> = (0..30)
            .map(|_| (0..12).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
            .collect();
        let mut external: Vec<String> = in_domain[..10].to_vec();
        external.extend(random.iter().cloned());
        let ranked = select_scored(&external, &in_domain, external.len(), &SelectionConfig::default());
        let first_random = ranked.iter().position(|s| s.index >= 10).unwrap();
        assert_eq!(first_random, 10, "all duplicates must precede all random strings");

        // Independent recomputation of the scores reproduces the order.
        let symbols: std::collections::HashSet<char> =
            external.iter().chain(&in_domain).flat_map(|s| s.chars().filter(|c| !c.is_whitespace())).collect();
        let in_lm = CharNgramScorer::train(&in_domain, 2, symbols.len() + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut picked = sample(&mut rng, external.len(), in_domain.len()).into_vec();
        picked.sort_unstable();
        let sample_text: Vec<&String> = picked.iter().map(|&i| &external[i]).collect();
        let out_lm = CharNgramScorer::train(&sample_text, 2, symbols.len() + 1);
        for s in &ranked {
            let expect = in_lm.cross_entropy(&s.text) - out_lm.cross_entropy(&s.text);
            assert_eq!(s.score, expect);
        }
    }
}
