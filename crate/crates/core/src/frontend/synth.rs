//! A small synthetic speech task standing in for a real corpus.
//!
//! Text comes from a topic grammar: a sentence picks one topic and strings
//! together 2-4 of its words. Each word is a topic-specific stem followed
//! by a suffix shared across topics, so the topic is only recoverable from
//! context further back than two characters.
//!
//! Audio is a sequence of per-character feature templates, each held for a
//! fixed number of frames, plus Gaussian noise. Letters from different
//! topics are paired so their templates lie close together; telling them
//! apart under noise needs the language context.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{splice_subsample, FeatureMatrix, Utterance};
use crate::corpus::{TokenSeq, Vocab};
use crate::error::{Error, Result};

const GRAMMAR_SEED: u64 = 0x5EED_0001;
const TEMPLATE_SEED: u64 = 0x5EED_0002;

const IN_TOPIC_LETTERS: [&str; 4] = ["abc", "def", "ghi", "jkl"];
const IN_SUFFIXES: [&str; 6] = ["mo", "no", "om", "on", "mn", "nm"];
const OUT_TOPIC_LETTERS: [&str; 4] = ["adgj", "behk", "cfil", "aeil"];
const OUT_SUFFIXES: [&str; 4] = ["mm", "nn", "oo", "mo"];
const WORDS_PER_TOPIC: usize = 30;

/// Letters whose templates are near-duplicates.
pub const CONFUSABLE_PAIRS: [(char, char); 7] = [
    ('a', 'd'),
    ('b', 'e'),
    ('c', 'f'),
    ('g', 'j'),
    ('h', 'k'),
    ('i', 'l'),
    ('m', 'n'),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The grammar of the speech transcripts.
    InDomain,
    /// Same alphabet, different lexicon and no topic coherence.
    OutOfDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGrammar {
    topics: Vec<(Vec<String>, WeightedIndex<f64>)>,
}

impl SynthGrammar {
    pub fn new(domain: Domain) -> Self {
        let (letters, suffixes): (&[&str], &[&str]) = match domain {
            Domain::InDomain => (&IN_TOPIC_LETTERS, &IN_SUFFIXES),
            Domain::OutOfDomain => (&OUT_TOPIC_LETTERS, &OUT_SUFFIXES),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(GRAMMAR_SEED ^ domain as u64);
        let topics = letters
            .iter()
            .map(|letters| {
                let chars: Vec<char> = letters.chars().collect();
                let mut stems: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
                for &a in &chars {
                    for &b in &chars {
                        stems.push(format!("{a}{b}"));
                    }
                }
                let combos: Vec<String> = stems
                    .iter()
                    .flat_map(|stem| suffixes.iter().map(move |suffix| format!("{stem}{suffix}")))
                    .collect();
                let picked: Vec<String> = combos.choose_multiple(&mut rng, WORDS_PER_TOPIC).cloned().collect();
                let weights: Vec<f64> = (0..picked.len()).map(|r| 1.0 / (r + 1) as f64).collect();
                (picked, WeightedIndex::new(weights).unwrap())
            })
            .collect();
        SynthGrammar { topics }
    }

    pub fn words(&self, topic: usize) -> &[String] {
        &self.topics[topic].0
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn sample_sentence<R: Rng>(&self, rng: &mut R) -> String {
        let (words, dist) = &self.topics[rng.random_range(0..self.topics.len())];
        let n_words = rng.random_range(2..=4);
        (0..n_words).map(|_| words[dist.sample(rng)].as_str()).collect()
    }

    /// Rejection-samples a sentence whose character length is in `len_range`.
    pub fn sample_in_range<R: Rng>(&self, rng: &mut R, len_range: (usize, usize)) -> Result<String> {
        check_range(len_range)?;
        for _ in 0..10_000 {
            let s = self.sample_sentence(rng);
            let n = s.chars().count();
            if n >= len_range.0 && n <= len_range.1 {
                return Ok(s);
            }
        }
        Err(Error::invalid(format!("grammar cannot produce sentences of length {len_range:?}")))
    }
}

fn check_range(len_range: (usize, usize)) -> Result<()> {
    if len_range.0 == 0 || len_range.0 > len_range.1 {
        return Err(Error::invalid(format!("invalid length range {len_range:?}")));
    }
    Ok(())
}

/// `n` sentences from `domain`, deterministic in `seed`.
pub fn synth_text(domain: Domain, seed: u64, n: usize, len_range: (usize, usize)) -> Result<Vec<String>> {
    let grammar = SynthGrammar::new(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| grammar.sample_in_range(&mut rng, len_range)).collect()
}

/// Grammar plus acoustic templates.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub grammar: SynthGrammar,
    pub feature_dim: usize,
    pub frames_per_char: usize,
    /// Distance between the templates of a confusable pair.
    pub confusion_distance: f64,
}

impl Default for SynthTask {
    fn default() -> Self {
        SynthTask {
            grammar: SynthGrammar::new(Domain::InDomain),
            feature_dim: 8,
            frames_per_char: 3,
            confusion_distance: 1.0,
        }
    }
}

impl SynthTask {
    fn base_template(&self, c: char) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(TEMPLATE_SEED ^ c as u64);
        (0..self.feature_dim).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Fixed feature pattern for character `c`.
    pub fn template(&self, c: char) -> Vec<f64> {
        let Some(&(first, _)) = CONFUSABLE_PAIRS.iter().find(|&&(_, second)| second == c) else {
            return self.base_template(c);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(TEMPLATE_SEED ^ ((c as u64) << 20));
        let dir: Vec<f64> = (0..self.feature_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.base_template(first)
            .iter()
            .zip(&dir)
            .map(|(b, d)| b + self.confusion_distance * d / norm)
            .collect()
    }

    /// Raw frames for `text`: each character's template repeated, plus noise.
    pub fn render<R: Rng>(&self, text: &str, noise_std: f64, rng: &mut R) -> Result<FeatureMatrix> {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Err(Error::invalid("cannot render an empty transcript"));
        }
        let mut data = Vec::with_capacity(chars.len() * self.frames_per_char * self.feature_dim);
        for &c in &chars {
            let t = self.template(c);
            for _ in 0..self.frames_per_char {
                for &v in &t {
                    let noise = if noise_std > 0.0 {
                        noise_std * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    data.push(v + noise);
                }
            }
        }
        FeatureMatrix::new(chars.len() * self.frames_per_char, self.feature_dim, data)
    }

    pub fn dataset(
        &self,
        seed: u64,
        vocab: &Vocab,
        n_utts: usize,
        len_range: (usize, usize),
        noise_std: f64,
    ) -> Result<Vec<(FeatureMatrix, TokenSeq)>> {
        if vocab.char_ids().len() < 2 {
            return Err(Error::invalid("synthetic data needs at least two non-special tokens"));
        }
        check_range(len_range)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_utts)
            .map(|_| {
                let text = self.grammar.sample_in_range(&mut rng, len_range)?;
                let feats = self.render(&text, noise_std, &mut rng)?;
                Ok((feats, vocab.encode_chars(&text, true)))
            })
            .collect()
    }
}

/// Deterministic synthetic (features, transcript) pairs from the default task.
pub fn synth_dataset(
    seed: u64,
    vocab: &Vocab,
    n_utts: usize,
    len_range: (usize, usize),
    noise_std: f64,
) -> Result<Vec<(FeatureMatrix, TokenSeq)>> {
    SynthTask::default().dataset(seed, vocab, n_utts, len_range, noise_std)
}

/// Network-ready utterances (spliced x4, subsampled x3) with ids `{prefix}{index:05}`.
pub fn synth_utterances(
    task: &SynthTask,
    prefix: &str,
    seed: u64,
    vocab: &Vocab,
    n_utts: usize,
    len_range: (usize, usize),
    noise_std: f64,
) -> Result<Vec<Utterance>> {
    Ok(task
        .dataset(seed, vocab, n_utts, len_range, noise_std)?
        .into_iter()
        .enumerate()
        .map(|(i, (raw, tokens))| Utterance {
            id: format!("{prefix}{i:05}"),
            features: splice_subsample(&raw, 3, 3),
            tokens,
        })
        .collect())
}
