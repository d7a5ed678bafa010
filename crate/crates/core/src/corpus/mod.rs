//! Character vocabulary, tokenization, and external-text preparation.

mod prep;
mod select;
pub mod text;

pub use prep::{filter_by_length, mix_with_duplication, prepare_lm_text, resegment, PrepConfig, PreparedText};
pub use select::{
    select_by_cross_entropy, select_scored, CharNgramScorer, ScoredSentence, SelectionConfig,
};

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const SPECIALS: [&str; 3] = ["<unk>", "<sos>", "<eos>"];

/// Character inventory. Ids 0, 1, 2 are always `<unk>`, `<sos>`, `<eos>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Encoded transcript.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        TokenSeq { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn check_range(&self, k: usize) -> Result<()> {
        match self.ids.iter().find(|&&id| id >= k) {
            Some(id) => Err(Error::invalid(format!("token id {id} out of range for K={k}"))),
            None => Ok(()),
        }
    }

    /// The ids with `<sos>`/`<eos>`/`<unk>` removed.
    pub fn without_specials(&self) -> Vec<usize> {
        self.ids.iter().copied().filter(|&id| id > EOS).collect()
    }
}

impl Vocab {
    /// Counts non-whitespace characters; tokens with `count >= min_count` are
    /// ordered by count (descending) then codepoint.
    pub fn build<S: AsRef<str>>(sentences: &[S], min_count: usize) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::invalid("cannot build a vocabulary from no sentences"));
        }
        let mut counts: HashMap<char, usize> = HashMap::new();
        for s in sentences {
            for c in s.as_ref().chars().filter(|c| !c.is_whitespace()) {
                *counts.entry(c).or_default() += 1;
            }
        }
        let mut chars: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
        chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(chars.into_iter().map(|(c, _)| c.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 4 {
            return Err(Error::invalid(format!(
                "vocabulary needs the three specials plus at least one character, got {} tokens",
                tokens.len()
            )));
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens[i] != *s {
                return Err(Error::invalid(format!("token {i} must be {s}, found {}", tokens[i])));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Ids of the non-special tokens.
    pub fn char_ids(&self) -> std::ops::Range<usize> {
        3..self.tokens.len()
    }

    /// One id per non-whitespace character; unknown characters become `<unk>`.
    pub fn encode_chars(&self, text: &str, add_sos_eos: bool) -> TokenSeq {
        let mut ids = Vec::with_capacity(text.len() + 2);
        if add_sos_eos {
            ids.push(SOS);
        }
        let mut buf = [0u8; 4];
        for c in text.chars().filter(|c| !c.is_whitespace()) {
            ids.push(self.id(c.encode_utf8(&mut buf)).unwrap_or(UNK));
        }
        if add_sos_eos {
            ids.push(EOS);
        }
        TokenSeq::new(ids)
    }

    /// Concatenates the tokens, dropping specials.
    pub fn decode(&self, seq: &TokenSeq) -> String {
        seq.ids
            .iter()
            .filter(|&&id| id > EOS)
            .filter_map(|&id| self.token(id))
            .collect()
    }

    /// One token per line; the line number is the id.
    pub fn write(&self, path: &Path) -> Result<()> {
        text::write_lines(path, &self.tokens)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tokens(text::read_lines(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn build_small() {
        let v = Vocab::build(&["ab", "ba"], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(&v.tokens()[..3], &SPECIALS.map(String::from));
        assert_eq!(v.token(3), Some("a"));
        assert_eq!(v.token(4), Some("b"));
    }

    #[test]
    fn min_count_filters() {
        let v = Vocab::build(&["ab", "ac"], 2).unwrap();
        assert!(v.id("a").is_some());
        assert!(v.id("b").is_none() && v.id("c").is_none());
        assert!(Vocab::build(&["ab"], 2).is_err());
        assert!(Vocab::build::<&str>(&[], 1).is_err());
    }

    #[test]
    fn ordering_is_count_then_codepoint() {
        let v = Vocab::build(&["zzyx", "yx"], 1).unwrap();
        let order: Vec<&str> = v.tokens()[3..].iter().map(String::as_str).collect();
        assert_eq!(order, ["x", "y", "z"]);
    }

    #[test]
    fn shuffled_input_builds_same_vocab() {
        let mut sentences: Vec<String> = (0..40).map(|i| format!("{}{}", i % 7, "abcde".repeat(i % 3))).collect();
        let reference = Vocab::build(&sentences, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            sentences.shuffle(&mut rng);
            assert_eq!(Vocab::build(&sentences, 1).unwrap(), reference);
        }
    }

    #[test]
    fn encode_edges() {
        let v = Vocab::build(&["ab"], 1).unwrap();
        assert_eq!(v.encode_chars("", true).ids, vec![SOS, EOS]);
        assert_eq!(v.encode_chars("aqb", false).ids, vec![v.id("a").unwrap(), UNK, v.id("b").unwrap()]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocab::build(&["hello world"], 1).unwrap();
        v.write(&path).unwrap();
        assert_eq!(Vocab::read(&path).unwrap(), v);
    }

    proptest! {
        #[test]
        fn encode_decode_identity(text in "[a-f]{0,30}") {
            let v = Vocab::build(&["abcdef"], 1).unwrap();
            let seq = v.encode_chars(&text, true);
            prop_assert!(seq.check_range(v.len()).is_ok());
            prop_assert_eq!(v.decode(&seq), text);
        }
    }
}
