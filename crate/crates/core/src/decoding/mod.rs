//! Beam search with optional shallow fusion, CER scoring, and test-set reports.

mod cer;

pub use cer::{align, cer, edit_counts, CerCounts, EditOp};

use std::cmp::Ordering;
use std::path::Path;

use crate::corpus::text::write_string;
use crate::corpus::{TokenSeq, Vocab, EOS, SOS};
use crate::error::{Error, Result};
use crate::frontend::{FeatureMatrix, Utterance};
use crate::lm::IncrementalLm;
use crate::numerics::{log_softmax, Tensor};
use crate::seq2seq::S2SModel;

/// A model that can be decoded step by step.
pub trait Recognizer {
    type Memory;

    fn vocab_size(&self) -> usize;

    fn encode_features(&self, features: &FeatureMatrix) -> Result<Self::Memory>;

    /// Log-probabilities of the token following `prefix` (which starts with `<sos>`).
    fn next_log_probs(&self, memory: &Self::Memory, prefix: &[usize]) -> Result<Vec<f64>>;
}

impl Recognizer for S2SModel {
    type Memory = Tensor;

    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn encode_features(&self, features: &FeatureMatrix) -> Result<Tensor> {
        self.encode(features)
    }

    fn next_log_probs(&self, memory: &Tensor, prefix: &[usize]) -> Result<Vec<f64>> {
        let logits = self.prefix_logits(memory, prefix)?;
        Ok(log_softmax(logits.row(logits.rows() - 1)))
    }
}

/// `s2s + w * lm`.
pub fn fused_step_score(s2s_logprob: f64, lm_logprob: f64, w: f64) -> f64 {
    s2s_logprob + w * lm_logprob
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamOptions {
    pub beam: usize,
    /// Most output tokens per hypothesis, `<eos>` included.
    pub max_len: usize,
    pub fusion_weight: f64,
    /// Rank finished hypotheses by score per output token.
    pub length_norm: bool,
}

impl Default for BeamOptions {
    fn default() -> Self {
        BeamOptions { beam: 5, max_len: 60, fusion_weight: 0.0, length_norm: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Starts with `<sos>`; ends with `<eos>` when finished normally.
    pub tokens: Vec<usize>,
    pub score: f64,
    pub step_scores: Vec<f64>,
    pub finished: bool,
}

impl Hypothesis {
    pub fn output(&self) -> TokenSeq {
        TokenSeq::new(self.tokens.clone())
    }

    fn rank_score(&self, length_norm: bool) -> f64 {
        if length_norm && !self.step_scores.is_empty() {
            self.score / self.step_scores.len() as f64
        } else {
            self.score
        }
    }
}

/// Higher score first; then shorter; then lexicographically smaller tokens.
fn better(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

struct Live<S> {
    hyp: Hypothesis,
    lm_state: Option<S>,
}

pub fn beam_search<M: Recognizer, L: IncrementalLm>(
    model: &M,
    features: &FeatureMatrix,
    opts: &BeamOptions,
    lm: Option<&L>,
) -> Result<Hypothesis> {
    let memory = model.encode_features(features)?;
    beam_search_memory(model, &memory, opts, lm)
}

/// Beam search from an already encoded utterance.
pub fn beam_search_memory<M: Recognizer, L: IncrementalLm>(
    model: &M,
    memory: &M::Memory,
    opts: &BeamOptions,
    lm: Option<&L>,
) -> Result<Hypothesis> {
    if opts.beam == 0 || opts.max_len == 0 {
        return Err(Error::invalid("beam and max_len must be at least 1"));
    }
    if !(opts.fusion_weight >= 0.0) {
        return Err(Error::invalid(format!("fusion weight must be non-negative, got {}", opts.fusion_weight)));
    }
    let fusion = if opts.fusion_weight > 0.0 {
        let lm = lm.ok_or_else(|| Error::invalid("fusion weight > 0 needs a language model"))?;
        if lm.vocab_size() != model.vocab_size() {
            return Err(Error::invalid("language model and recognizer vocabularies differ"));
        }
        Some(lm)
    } else {
        None
    };
    let k = model.vocab_size();
    let w = opts.fusion_weight;

    let mut live = vec![Live {
        hyp: Hypothesis { tokens: vec![SOS], score: 0.0, step_scores: Vec::new(), finished: false },
        lm_state: fusion.map(|lm| lm.initial_state()),
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for step in 0..opts.max_len {
        // (score, parent, token, step score)
        let mut cands: Vec<(f64, usize, usize, f64)> = Vec::with_capacity(live.len() * k);
        let mut next_states = Vec::with_capacity(live.len());
        for (p, l) in live.iter().enumerate() {
            let s2s = model.next_log_probs(memory, &l.hyp.tokens)?;
            let lm_lp = match (fusion, &l.lm_state) {
                (Some(lm), Some(st)) => {
                    let (lp, next) = lm.advance(st, *l.hyp.tokens.last().unwrap())?;
                    next_states.push(Some(next));
                    Some(lp)
                }
                _ => {
                    next_states.push(None);
                    None
                }
            };
            for tok in 0..k {
                let s = match &lm_lp {
                    Some(lp) => fused_step_score(s2s[tok], lp[tok], w),
                    None => s2s[tok],
                };
                cands.push((l.hyp.score + s, p, tok, s));
            }
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| live[a.1].hyp.tokens.cmp(&live[b.1].hyp.tokens))
                .then(a.2.cmp(&b.2))
        });
        let mut next_live = Vec::with_capacity(opts.beam);
        for &(score, p, tok, s) in cands.iter().take(opts.beam) {
            let parent = &live[p];
            let mut tokens = parent.hyp.tokens.clone();
            tokens.push(tok);
            let mut step_scores = parent.hyp.step_scores.clone();
            step_scores.push(s);
            let finished = tok == EOS;
            let hyp = Hypothesis { tokens, score, step_scores, finished };
            if finished || step + 1 == opts.max_len {
                done.push(hyp);
            } else {
                next_live.push(Live { hyp, lm_state: next_states[p].clone() });
            }
        }
        if next_live.is_empty() {
            break;
        }
        live = next_live;
    }
    done.into_iter()
        .min_by(|a, b| better(a.rank_score(opts.length_norm), &a.tokens, b.rank_score(opts.length_norm), &b.tokens))
        .ok_or_else(|| Error::invalid("beam search produced no hypothesis"))
}

/// Argmax chain from `<sos>` until `<eos>` or `max_len` tokens.
pub fn greedy_decode<M: Recognizer>(model: &M, features: &FeatureMatrix, max_len: usize) -> Result<Hypothesis> {
    let memory = model.encode_features(features)?;
    let mut hyp = Hypothesis { tokens: vec![SOS], score: 0.0, step_scores: Vec::new(), finished: false };
    for _ in 0..max_len {
        let lp = model.next_log_probs(&memory, &hyp.tokens)?;
        let (tok, &s) = lp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        hyp.tokens.push(tok);
        hyp.step_scores.push(s);
        hyp.score += s;
        if tok == EOS {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub reference: TokenSeq,
    pub hypothesis: TokenSeq,
    pub counts: CerCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub cer: f64,
}

impl EvalReport {
    /// Aggregates rows (sorted here by utterance id).
    pub fn from_rows(mut rows: Vec<EvalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("no utterances to report"));
        }
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let errors: usize = rows.iter().map(|r| r.counts.errors()).sum();
        let len: usize = rows.iter().map(|r| r.counts.ref_len).sum();
        Ok(EvalReport { rows, cer: 100.0 * errors as f64 / len as f64 })
    }

    pub fn decode_tsv(&self, vocab: &Vocab) -> String {
        self.rows
            .iter()
            .map(|r| format!("{}\t{}\n", r.id, vocab.decode(&r.hypothesis)))
            .collect()
    }

    pub fn report_tsv(&self, vocab: &Vocab) -> String {
        let mut out = String::from("utt_id\tref\thyp\tsub\tdel\tins\tref_len\n");
        for r in &self.rows {
            let c = &r.counts;
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.id,
                vocab.decode(&r.reference),
                vocab.decode(&r.hypothesis),
                c.substitutions,
                c.deletions,
                c.insertions,
                c.ref_len
            ));
        }
        out.push_str(&format!("CER% {:.2}\n", self.cer));
        out
    }

    pub fn write(&self, decode_path: &Path, report_path: &Path, vocab: &Vocab) -> Result<()> {
        write_string(decode_path, &self.decode_tsv(vocab))?;
        write_string(report_path, &self.report_tsv(vocab))
    }
}

/// Decodes every utterance and scores it against its transcript.
pub fn evaluate<M: Recognizer, L: IncrementalLm>(
    model: &M,
    test: &[Utterance],
    opts: &BeamOptions,
    lm: Option<&L>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let rows = test
        .iter()
        .map(|u| {
            let wrap = |e: Error| Error::EvaluationFailure(format!("utterance {}: {e}", u.id));
            let hyp = beam_search(model, &u.features, opts, lm).map_err(wrap)?;
            let counts = cer(&u.tokens, &hyp.output()).map_err(wrap)?;
            Ok(EvalRow { id: u.id.clone(), reference: u.tokens.clone(), hypothesis: hyp.output(), counts })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{kn_train, NGramModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Next-token distribution is a fixed random function of the prefix.
    struct TableModel {
        k: usize,
        seed: u64,
    }

    impl Recognizer for TableModel {
        type Memory = ();

        fn vocab_size(&self) -> usize {
            self.k
        }

        fn encode_features(&self, _: &FeatureMatrix) -> Result<()> {
            Ok(())
        }

        fn next_log_probs(&self, _: &(), prefix: &[usize]) -> Result<Vec<f64>> {
            let mut h = self.seed;
            for &t in prefix {
                h = h.wrapping_mul(31).wrapping_add(t as u64 + 1);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(h);
            let logits: Vec<f64> = (0..self.k).map(|_| rng.random_range(-2.0..2.0)).collect();
            Ok(log_softmax(&logits))
        }
    }

    fn dummy() -> FeatureMatrix {
        FeatureMatrix::new(1, 1, vec![0.0]).unwrap()
    }

    #[test]
    fn fused_score_examples() {
        assert_eq!(fused_step_score(-1.0, -2.0, 0.0), -1.0);
        assert!((fused_step_score(-1.0, -2.0, 0.1) + 1.2).abs() < 1e-15);
        assert_eq!(fused_step_score(-1.0, -2.0, 1.0), -3.0);
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..20 {
            let m = TableModel { k: 5, seed };
            let opts = BeamOptions { beam: 1, max_len: 6, ..Default::default() };
            let b = beam_search::<_, NGramModel>(&m, &dummy(), &opts, None).unwrap();
            assert_eq!(b, greedy_decode(&m, &dummy(), 6).unwrap());
        }
    }

    #[test]
    fn fusion_needs_a_model_and_zero_weight_ignores_it() {
        let m = TableModel { k: 4, seed: 3 };
        let opts = BeamOptions { fusion_weight: 0.1, max_len: 4, ..Default::default() };
        assert!(matches!(beam_search::<_, NGramModel>(&m, &dummy(), &opts, None), Err(Error::InvalidArgument(_))));
        let lm = kn_train(&[TokenSeq::new(vec![SOS, 3, 3, EOS])], 2, 4).unwrap();
        let off = BeamOptions { max_len: 4, ..Default::default() };
        assert_eq!(
            beam_search(&m, &dummy(), &off, Some(&lm)).unwrap(),
            beam_search::<_, NGramModel>(&m, &dummy(), &off, None).unwrap()
        );
    }

    #[test]
    fn score_is_sum_of_step_scores() {
        let m = TableModel { k: 4, seed: 11 };
        let lm = kn_train(&[TokenSeq::new(vec![SOS, 3, EOS])], 2, 4).unwrap();
        let opts = BeamOptions { fusion_weight: 0.5, max_len: 5, beam: 3, ..Default::default() };
        let h = beam_search(&m, &dummy(), &opts, Some(&lm)).unwrap();
        assert!((h.score - h.step_scores.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(h.finished, h.tokens.last() == Some(&EOS));
    }

    #[test]
    fn report_aggregates_and_sorts() {
        let mk = |id: &str, r: Vec<usize>, h: Vec<usize>| {
            let (r, h) = (TokenSeq::new(r), TokenSeq::new(h));
            EvalRow { id: id.into(), counts: cer(&r, &h).unwrap(), reference: r, hypothesis: h }
        };
        // ref "abc" hyp "axcd": 2 edits / 3; ref "ab" hyp "b": 1 edit / 2.
        let rep = EvalReport::from_rows(vec![
            mk("u2", vec![3, 4], vec![4]),
            mk("u1", vec![3, 4, 5], vec![3, 6, 5, 7]),
        ])
        .unwrap();
        assert_eq!(rep.rows[0].id, "u1");
        assert!((rep.cer - 60.0).abs() < 1e-12);
        let vocab = Vocab::from_tokens(["<unk>", "<sos>", "<eos>", "a", "b", "c", "x", "d"].iter().map(|s| s.to_string()).collect()).unwrap();
        let tsv = rep.report_tsv(&vocab);
        assert!(tsv.ends_with("CER% 60.00\n"));
        assert!(rep.decode_tsv(&vocab).starts_with("u1\taxcd\n"));
    }
}
