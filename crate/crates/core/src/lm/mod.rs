//! The teacher LSTM language model, a Kneser-Ney baseline, perplexity, and
//! the soft-label cache.

mod cache;
mod ngram;
mod rnn;

pub use cache::{precompute_soft_labels, read_soft_labels, write_soft_labels, SOFT_LABEL_MAGIC};
pub use ngram::{kn_prob, kn_train, NGramModel};
pub use rnn::{
    lm_step, mean_nll, soft_labels, train_rnnlm, train_rnnlm_from, LmConfig, LmCurve, LmTrainConfig, RecurrentLM,
    TeacherState,
};

use crate::corpus::{TokenSeq, SOS};
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, Tensor};

/// Anything that scores whole `<sos> ... <eos>` sentences.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    /// `log P(ids[t] | ids[..t])` for `t = 1..len`.
    fn sentence_log_probs(&self, ids: &[usize]) -> Result<Vec<f64>>;
}

impl LanguageModel for RecurrentLM {
    fn vocab_size(&self) -> usize {
        RecurrentLM::vocab_size(self)
    }

    fn sentence_log_probs(&self, ids: &[usize]) -> Result<Vec<f64>> {
        if ids.len() < 2 {
            return Ok(Vec::new());
        }
        let logits = self.sequence_logits(&ids[..ids.len() - 1])?;
        Ok(rnn::log_probs_rows(&logits)
            .into_iter()
            .zip(&ids[1..])
            .map(|(row, &next)| row[next])
            .collect())
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        NGramModel::vocab_size(self)
    }

    fn sentence_log_probs(&self, ids: &[usize]) -> Result<Vec<f64>> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.vocab_size()) {
            return Err(Error::invalid(format!("token id {bad} out of range for K={}", self.vocab_size())));
        }
        Ok(NGramModel::sentence_log_probs(self, ids))
    }
}

/// Token-by-token scoring for fusion inside beam search.
pub trait IncrementalLm {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    /// Consumes `prev`; returns log-probabilities of every next token.
    fn advance(&self, state: &Self::State, prev: usize) -> Result<(Vec<f64>, Self::State)>;
}

impl IncrementalLm for RecurrentLM {
    type State = TeacherState;

    fn vocab_size(&self) -> usize {
        RecurrentLM::vocab_size(self)
    }

    fn initial_state(&self) -> TeacherState {
        TeacherState::zeros(self.config())
    }

    fn advance(&self, state: &TeacherState, prev: usize) -> Result<(Vec<f64>, TeacherState)> {
        let (logits, next) = lm_step(self, state, prev)?;
        Ok((log_softmax(&logits), next))
    }
}

impl IncrementalLm for NGramModel {
    type State = Vec<usize>;

    fn vocab_size(&self) -> usize {
        NGramModel::vocab_size(self)
    }

    fn initial_state(&self) -> Vec<usize> {
        Vec::new()
    }

    fn advance(&self, state: &Vec<usize>, prev: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        if prev >= self.vocab_size() {
            return Err(Error::invalid(format!("token id {prev} out of range for K={}", self.vocab_size())));
        }
        let mut hist = state.clone();
        hist.push(prev);
        let keep = self.order().saturating_sub(1);
        if hist.len() > keep {
            hist.drain(..hist.len() - keep);
        }
        let lp = (0..self.vocab_size()).map(|k| self.prob(&hist, k).ln()).collect();
        Ok((lp, hist))
    }
}

/// `exp(-(1/N) sum log P)` over every predicted token, `<eos>` included.
pub fn perplexity<M: LanguageModel + ?Sized>(model: &M, corpus: &[TokenSeq]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::invalid("perplexity over an empty corpus"));
    }
    let (mut total, mut n) = (0.0, 0usize);
    for (i, s) in corpus.iter().enumerate() {
        if s.ids.first() != Some(&SOS) {
            return Err(Error::invalid(format!("sentence {i} does not start with <sos>")));
        }
        for (t, lp) in model.sentence_log_probs(&s.ids)?.into_iter().enumerate() {
            if !lp.is_finite() {
                return Err(Error::EvaluationFailure(format!(
                    "zero probability for token {} at position {} of sentence {i}",
                    s.ids[t + 1],
                    t + 1
                )));
            }
            total += lp;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("corpus has no predicted tokens"));
    }
    Ok((-total / n as f64).exp())
}

/// A fixed table `P(next | prev)`, handy as a hand-built model.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramTable {
    pub probs: Tensor,
}

impl LanguageModel for BigramTable {
    fn vocab_size(&self) -> usize {
        self.probs.rows()
    }

    fn sentence_log_probs(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let k = self.vocab_size();
        ids.windows(2)
            .map(|w| {
                if w[0] >= k || w[1] >= k {
                    return Err(Error::invalid("token id out of range"));
                }
                Ok(self.probs.get2(w[0], w[1]).ln())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS;

    fn corpus() -> Vec<TokenSeq> {
        vec![TokenSeq::new(vec![SOS, 3, 4, EOS]), TokenSeq::new(vec![SOS, 4, EOS])]
    }

    #[test]
    fn uniform_model_has_perplexity_k() {
        let m = BigramTable { probs: Tensor::filled(&[5, 5], 0.2) };
        assert!((perplexity(&m, &corpus()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_model_has_perplexity_one() {
        let mut p = Tensor::zeros(&[5, 5]);
        for (a, b) in [(SOS, 3), (3, 4), (4, EOS)] {
            *p.row_mut(a).get_mut(b).unwrap() = 1.0;
        }
        let m = BigramTable { probs: p };
        let c = vec![TokenSeq::new(vec![SOS, 3, 4, EOS])];
        assert!((perplexity(&m, &c).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_bigram_perplexity() {
        let mut p = Tensor::filled(&[5, 5], 0.0);
        p.row_mut(SOS).copy_from_slice(&[0.0, 0.0, 0.0, 0.5, 0.5]);
        p.row_mut(3).copy_from_slice(&[0.0, 0.0, 0.25, 0.0, 0.75]);
        p.row_mut(4).copy_from_slice(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        let m = BigramTable { probs: p };
        // Events: 0.5, 0.75, 1.0, 0.5, 1.0 over N = 5.
        let expect = (0.5f64 * 0.75 * 0.5).powf(-1.0 / 5.0);
        assert!((perplexity(&m, &corpus()).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_event_is_named() {
        let mut p = Tensor::filled(&[5, 5], 0.25);
        p.row_mut(3).copy_from_slice(&[0.25, 0.25, 0.25, 0.25, 0.0]);
        let err = perplexity(&BigramTable { probs: p }, &corpus()).unwrap_err();
        match err {
            Error::EvaluationFailure(msg) => assert!(msg.contains("token 4 at position 2 of sentence 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn incremental_ngram_matches_direct_probs() {
        let m = kn_train(&corpus(), 3, 5).unwrap();
        let mut st = m.initial_state();
        let ids = [SOS, 3, 4, EOS];
        let direct = LanguageModel::sentence_log_probs(&m, &ids).unwrap();
        for t in 0..3 {
            let (lp, next) = m.advance(&st, ids[t]).unwrap();
            assert!((lp[ids[t + 1]] - direct[t]).abs() < 1e-15);
            st = next;
        }
    }

    #[test]
    fn rnn_and_ngram_count_the_same_events() {
        let rnn = RecurrentLM::zeros(LmConfig { vocab_size: 5, emb_dim: 2, hidden: 2, layers: 2 }).unwrap();
        let ppl = perplexity(&rnn, &corpus()).unwrap();
        assert!((ppl - 5.0).abs() < 1e-12);
        let ids = &corpus()[0].ids;
        assert_eq!(
            LanguageModel::sentence_log_probs(&rnn, ids).unwrap().len(),
            LanguageModel::sentence_log_probs(&kn_train(&corpus(), 3, 5).unwrap(), ids).unwrap().len()
        );
    }
}
