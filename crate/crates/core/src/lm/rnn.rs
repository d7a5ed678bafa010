use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::CheckpointFile;
use crate::corpus::{TokenSeq, EOS, SOS};
use crate::error::{Error, Result};
use crate::numerics::{gradient, log_softmax, softmax_with_temperature, LabelDistribution, ParamId, ParamStore, Tape, Tensor, Var};
use crate::optim::SgdMomentum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl LmConfig {
    /// Two 1024-unit layers over 300-dim embeddings.
    pub fn paper(vocab_size: usize) -> Self {
        LmConfig { vocab_size, emb_dim: 300, hidden: 1024, layers: 2 }
    }

    pub fn desk(vocab_size: usize) -> Self {
        LmConfig { vocab_size, emb_dim: 16, hidden: 48, layers: 2 }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 || self.emb_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::invalid(format!("bad LM config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    w: ParamId,
    b: ParamId,
}

/// Character LM: embedding, stacked LSTM layers, linear output to K logits.
///
/// Each layer keeps its four gates in one `(in + H) x 4H` matrix applied to
/// `[x, h]`, in the order input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct RecurrentLM {
    config: LmConfig,
    params: ParamStore,
    embed: ParamId,
    layers: Vec<LayerIds>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Per-layer hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl TeacherState {
    pub fn zeros(config: &LmConfig) -> Self {
        TeacherState {
            h: vec![vec![0.0; config.hidden]; config.layers],
            c: vec![vec![0.0; config.hidden]; config.layers],
        }
    }
}

impl RecurrentLM {
    fn build(config: LmConfig, mut init: impl FnMut(&str, &[usize]) -> Tensor) -> Result<Self> {
        config.validate()?;
        let (k, e, h) = (config.vocab_size, config.emb_dim, config.hidden);
        let mut params = ParamStore::new();
        let embed = params.add("embed", init("embed", &[k, e]));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 { e } else { h };
            let w = params.add(format!("lstm{l}.w"), init("lstm.w", &[input + h, 4 * h]));
            let b = params.add(format!("lstm{l}.b"), init("lstm.b", &[1, 4 * h]));
            layers.push(LayerIds { w, b });
        }
        let out_w = params.add("out.w", init("out.w", &[h, k]));
        let out_b = params.add("out.b", init("out.b", &[1, k]));
        Ok(RecurrentLM { config, params, embed, layers, out_w, out_b })
    }

    /// Uniform initialization: +-0.1 for embedding and output, +-1/sqrt(H) for
    /// the recurrent layers, zero biases.
    pub fn new(config: LmConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1.0 / (config.hidden.max(1) as f64).sqrt();
        Self::build(config, |kind, shape| {
            let n: usize = shape.iter().product();
            let range = match kind {
                "lstm.w" => r,
                "embed" | "out.w" => 0.1,
                _ => return Tensor::zeros(shape),
            };
            let data = (0..n).map(|_| rng.random_range(-range..range)).collect();
            Tensor::new(shape.to_vec(), data).unwrap()
        })
    }

    /// Every parameter zero; the output is uniform for any history.
    pub fn zeros(config: LmConfig) -> Result<Self> {
        Self::build(config, |_, shape| Tensor::zeros(shape))
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_token(&self, id: usize) -> Result<()> {
        if id >= self.config.vocab_size {
            return Err(Error::invalid(format!(
                "token id {id} out of range for K={}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Runs time-major `inputs[t][b]` from the given initial `(h, c)` per
    /// layer (each `B x H`). Returns `(T*B) x K` logits, row `t*B + b`, and
    /// the final `(h, c)` vars.
    pub(crate) fn unroll(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[Vec<usize>],
        init: Vec<(Tensor, Tensor)>,
    ) -> (Var, Vec<(Var, Var)>) {
        let h = self.config.hidden;
        let table = tape.param(self.embed);
        let mut state: Vec<(Var, Var)> = init.into_iter().map(|(h0, c0)| (tape.leaf(h0), tape.leaf(c0))).collect();
        let mut tops = Vec::with_capacity(inputs.len());
        for ids in inputs {
            let mut x = tape.gather_rows(table, ids);
            for (l, ids) in self.layers.iter().enumerate() {
                let (h_prev, c_prev) = state[l];
                let w = tape.param(ids.w);
                let b = tape.param(ids.b);
                let z = tape.concat_cols(&[x, h_prev]);
                let a = tape.matmul(z, w);
                let a = tape.add_row(a, b);
                let s = tape.sigmoid(a);
                let i_gate = tape.slice_cols(s, 0, h);
                let f_gate = tape.slice_cols(s, h, h);
                let o_gate = tape.slice_cols(s, 3 * h, h);
                let g_pre = tape.slice_cols(a, 2 * h, h);
                let g = tape.tanh(g_pre);
                let keep = tape.mul(f_gate, c_prev);
                let write = tape.mul(i_gate, g);
                let c = tape.add(keep, write);
                let tc = tape.tanh(c);
                let h_new = tape.mul(o_gate, tc);
                state[l] = (h_new, c);
                x = h_new;
            }
            tops.push(x);
        }
        let stacked = tape.concat_rows(&tops);
        let w = tape.param(self.out_w);
        let b = tape.param(self.out_b);
        let logits = tape.matmul(stacked, w);
        (tape.add_row(logits, b), state)
    }

    fn zero_init(&self, batch: usize) -> Vec<(Tensor, Tensor)> {
        let z = Tensor::zeros(&[batch, self.config.hidden]);
        vec![(z.clone(), z); self.config.layers]
    }

    /// Logits for every prefix of `ids` (one row per input token), from a zero state.
    pub fn sequence_logits(&self, ids: &[usize]) -> Result<Tensor> {
        if ids.is_empty() {
            return Err(Error::invalid("empty input sequence"));
        }
        for &id in ids {
            self.check_token(id)?;
        }
        let mut tape = Tape::with_params(&self.params);
        let inputs: Vec<Vec<usize>> = ids.iter().map(|&id| vec![id]).collect();
        let (logits, _) = self.unroll(&mut tape, &inputs, self.zero_init(1));
        Ok(tape.value(logits).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&CheckpointFile::read(path)?)
    }

    pub fn to_checkpoint(&self) -> CheckpointFile {
        let mut ck = CheckpointFile::default();
        ck.set("kind", "rnnlm");
        ck.set("vocab_size", self.config.vocab_size);
        ck.set("emb_dim", self.config.emb_dim);
        ck.set("hidden", self.config.hidden);
        ck.set("layers", self.config.layers);
        ck.add_params("", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &CheckpointFile) -> Result<Self> {
        if ck.get("kind") != Some("rnnlm") {
            return Err(Error::format("checkpoint", "not an rnnlm checkpoint"));
        }
        let config = LmConfig {
            vocab_size: ck.require("vocab_size")?,
            emb_dim: ck.require("emb_dim")?,
            hidden: ck.require("hidden")?,
            layers: ck.require("layers")?,
        };
        let mut m = Self::zeros(config)?;
        ck.load_params("", &mut m.params)?;
        Ok(m)
    }
}

/// One recurrent step: consume `prev`, return next-token logits and the new state.
pub fn lm_step(m: &RecurrentLM, state: &TeacherState, prev: usize) -> Result<(Vec<f64>, TeacherState)> {
    m.check_token(prev)?;
    let cfg = m.config;
    if state.h.len() != cfg.layers || state.h.iter().chain(&state.c).any(|v| v.len() != cfg.hidden) {
        return Err(Error::invalid("teacher state does not match the model shape"));
    }
    let init = state
        .h
        .iter()
        .zip(&state.c)
        .map(|(h, c)| (Tensor::row_vector(h.clone()), Tensor::row_vector(c.clone())))
        .collect();
    let mut tape = Tape::with_params(&m.params);
    let (logits, fin) = m.unroll(&mut tape, &[vec![prev]], init);
    let next = TeacherState {
        h: fin.iter().map(|&(h, _)| tape.value(h).data().to_vec()).collect(),
        c: fin.iter().map(|&(_, c)| tape.value(c).data().to_vec()).collect(),
    };
    Ok((tape.value(logits).data().to_vec(), next))
}

/// Teacher-forced distributions for `transcript[1..]`, each tempered by `temperature`.
pub fn soft_labels(m: &RecurrentLM, transcript: &TokenSeq, temperature: f64) -> Result<Vec<LabelDistribution>> {
    if transcript.ids.first() != Some(&SOS) {
        return Err(Error::invalid("transcript must begin with <sos>"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if transcript.len() < 2 {
        return Ok(Vec::new());
    }
    let logits = m.sequence_logits(&transcript.ids[..transcript.len() - 1])?;
    (0..logits.rows())
        .map(|t| softmax_with_temperature(logits.row(t), temperature))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmTrainConfig {
    pub model: LmConfig,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm threshold; `None` disables clipping.
    pub clip: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
}

impl LmTrainConfig {
    pub fn new(model: LmConfig) -> Self {
        LmTrainConfig {
            model,
            epochs: 5,
            lr: 1.0,
            momentum: 0.9,
            clip: Some(5.0),
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Mean per-token cross-entropy of each epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LmCurve {
    pub epoch_loss: Vec<f64>,
}

/// Teacher-forced mean negative log-likelihood (nats per predicted token).
pub fn mean_nll(m: &RecurrentLM, corpus: &[TokenSeq]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in corpus.chunks(64) {
        let mut tape = Tape::with_params(&m.params);
        let (loss, count) = batch_loss(m, &mut tape, chunk)?;
        total += tape.value(loss).item() * count as f64;
        n += count;
    }
    if n == 0 {
        return Err(Error::invalid("corpus has no predicted tokens"));
    }
    Ok(total / n as f64)
}

/// Mean NLL over a padded batch; also returns the number of predicted tokens.
fn batch_loss(m: &RecurrentLM, tape: &mut Tape<'_>, batch: &[TokenSeq]) -> Result<(Var, usize)> {
    let k = m.vocab_size();
    for s in batch {
        if s.ids.first() != Some(&SOS) || s.len() < 2 {
            return Err(Error::invalid("LM sentences must start with <sos> and predict at least one token"));
        }
        s.check_range(k)?;
    }
    let steps = batch.iter().map(|s| s.len() - 1).max().unwrap();
    let b = batch.len();
    let inputs: Vec<Vec<usize>> = (0..steps)
        .map(|t| batch.iter().map(|s| *s.ids.get(t).unwrap_or(&EOS)).collect())
        .collect();
    let count: usize = batch.iter().map(|s| s.len() - 1).sum();
    let mut weights = Tensor::zeros(&[steps * b, k]);
    for (j, s) in batch.iter().enumerate() {
        for t in 0..s.len() - 1 {
            weights.row_mut(t * b + j)[s.ids[t + 1]] = -1.0 / count as f64;
        }
    }
    let (logits, _) = m.unroll(tape, &inputs, m.zero_init(b));
    let logp = tape.log_softmax_rows(logits);
    Ok((tape.dot_const(logp, weights), count))
}

/// SGD with momentum on shuffled sentence batches, from a seeded initialization.
pub fn train_rnnlm(corpus: &[TokenSeq], config: &LmTrainConfig) -> Result<(RecurrentLM, LmCurve)> {
    let init = RecurrentLM::new(config.model, config.seed)?;
    train_rnnlm_from(init, corpus, config)
}

pub fn train_rnnlm_from(mut model: RecurrentLM, corpus: &[TokenSeq], config: &LmTrainConfig) -> Result<(RecurrentLM, LmCurve)> {
    if corpus.is_empty() {
        return Err(Error::invalid("LM training corpus is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1a4e);
    let mut opt = SgdMomentum::new(&model.params, config.momentum);
    let mut curve = LmCurve::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0, 0usize);
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<TokenSeq> = idx.iter().map(|&i| corpus[i].clone()).collect();
            let mut grads = {
                let mut tape = Tape::with_params(&model.params);
                let (loss, count) = batch_loss(&model, &mut tape, &batch)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::TrainingFailure { epoch, step, reason: format!("loss is {value}") });
                }
                sum += value * count as f64;
                n += count;
                gradient(&tape, loss)?
            };
            if let Some(c) = config.clip {
                let norm = grads.clip_global_norm(c);
                if !norm.is_finite() {
                    return Err(Error::TrainingFailure { epoch, step, reason: "gradient norm is not finite".into() });
                }
            }
            opt.update(&mut model.params, &grads, config.lr);
        }
        curve.epoch_loss.push(sum / n as f64);
    }
    Ok((model, curve))
}

/// Row-wise log-probabilities of a logit matrix.
pub(crate) fn log_probs_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    (0..logits.rows()).map(|r| log_softmax(logits.row(r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LmConfig {
        LmConfig { vocab_size: 6, emb_dim: 4, hidden: 5, layers: 2 }
    }

    #[test]
    fn zero_model_gives_zero_logits_and_uniform_labels() {
        let m = RecurrentLM::zeros(cfg()).unwrap();
        let (logits, _) = lm_step(&m, &TeacherState::zeros(&cfg()), 3).unwrap();
        assert!(logits.iter().all(|&z| z == 0.0));
        for d in soft_labels(&m, &TokenSeq::new(vec![SOS, 3, 4, EOS]), 1.0).unwrap() {
            assert!(d.probs().iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
        }
    }

    #[test]
    fn step_composition_matches_unrolled_forward() {
        let m = RecurrentLM::new(cfg(), 7).unwrap();
        let s0 = TeacherState::zeros(&cfg());
        let (l1, s1) = lm_step(&m, &s0, SOS).unwrap();
        let (l2, _) = lm_step(&m, &s1, 4).unwrap();
        let full = m.sequence_logits(&[SOS, 4]).unwrap();
        for (a, b) in l1.iter().chain(&l2).zip(full.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (again, s1b) = lm_step(&m, &s0, SOS).unwrap();
        assert_eq!(again, l1);
        assert_eq!(s1b, s1);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let m = RecurrentLM::zeros(cfg()).unwrap();
        assert!(matches!(lm_step(&m, &TeacherState::zeros(&cfg()), 6), Err(Error::InvalidArgument(_))));
        assert!(matches!(soft_labels(&m, &TokenSeq::new(vec![3, EOS]), 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let corpus = vec![TokenSeq::new(vec![SOS, 3, 4, EOS])];
        let mut tc = LmTrainConfig::new(cfg());
        tc.epochs = 0;
        let (m, curve) = train_rnnlm(&corpus, &tc).unwrap();
        let init = RecurrentLM::new(cfg(), tc.seed).unwrap();
        for id in m.params().ids() {
            assert_eq!(m.params().get(id), init.params().get(id));
        }
        assert!(curve.epoch_loss.is_empty());
    }

    #[test]
    fn alternating_corpus_is_learned() {
        let mut ids = vec![SOS];
        for i in 0..12 {
            ids.push(if i % 2 == 0 { 3 } else { 4 });
        }
        ids.push(EOS);
        let corpus = vec![TokenSeq::new(ids.clone()); 8];
        let mut tc = LmTrainConfig::new(cfg());
        tc.epochs = 100;
        tc.batch_size = 4;
        let before = mean_nll(&RecurrentLM::new(cfg(), 0).unwrap(), &corpus).unwrap();
        let (m, curve) = train_rnnlm(&corpus, &tc).unwrap();
        let after = mean_nll(&m, &corpus).unwrap();
        assert!(curve.epoch_loss.iter().all(|l| l.is_finite()));
        assert!(after < before);
        assert!(after.exp() < 1.2, "perplexity {}", after.exp());
        let labels = soft_labels(&m, &TokenSeq::new(vec![SOS, 3, 4, 3]), 1.0).unwrap();
        assert!(labels[1].probs()[4] > labels[1].probs()[3]);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = RecurrentLM::new(cfg(), 3).unwrap();
        let back = RecurrentLM::from_checkpoint(&CheckpointFile::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(m.sequence_logits(&[SOS, 3, 5]).unwrap(), back.sequence_logits(&[SOS, 3, 5]).unwrap());
    }
}
