//! A small Speech-Transformer: self-attention encoder over spliced frames,
//! causal decoder with encoder-decoder attention, and one matrix serving as
//! both the token embedding and the output projection.

mod attention;

pub use attention::{attention, causal_mask};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::CheckpointFile;
use crate::corpus::{TokenSeq, SOS};
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S2SConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_blocks: usize,
    pub n_dec_blocks: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    /// Layer norm before each sublayer (plus a final norm) instead of after the residual.
    pub pre_norm: bool,
}

impl S2SConfig {
    /// 320-dim input, 512/8 heads, 6+6 blocks, 2048 feed-forward, 4232 characters.
    pub fn paper() -> Self {
        S2SConfig {
            input_dim: 320,
            d_model: 512,
            n_heads: 8,
            n_enc_blocks: 6,
            n_dec_blocks: 6,
            ff_dim: 2048,
            vocab_size: 4232,
            dropout: 0.1,
            pre_norm: false,
        }
    }

    pub fn desk(input_dim: usize, vocab_size: usize) -> Self {
        S2SConfig {
            input_dim,
            d_model: 32,
            n_heads: 2,
            n_enc_blocks: 2,
            n_dec_blocks: 2,
            ff_dim: 64,
            vocab_size,
            dropout: 0.1,
            pre_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_dim, self.d_model, self.n_heads, self.ff_dim];
        if dims.contains(&0) || self.vocab_size < 4 {
            return Err(Error::invalid(format!("bad seq2seq config {self:?}")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    fn write_header(&self, ck: &mut CheckpointFile) {
        ck.set("input_dim", self.input_dim);
        ck.set("d_model", self.d_model);
        ck.set("n_heads", self.n_heads);
        ck.set("n_enc_blocks", self.n_enc_blocks);
        ck.set("n_dec_blocks", self.n_dec_blocks);
        ck.set("ff_dim", self.ff_dim);
        ck.set("vocab_size", self.vocab_size);
        ck.set("dropout", self.dropout);
        ck.set("pre_norm", self.pre_norm);
    }

    fn read_header(ck: &CheckpointFile) -> Result<Self> {
        Ok(S2SConfig {
            input_dim: ck.require("input_dim")?,
            d_model: ck.require("d_model")?,
            n_heads: ck.require("n_heads")?,
            n_enc_blocks: ck.require("n_enc_blocks")?,
            n_dec_blocks: ck.require("n_dec_blocks")?,
            ff_dim: ck.require("ff_dim")?,
            vocab_size: ck.require("vocab_size")?,
            dropout: ck.require("dropout")?,
            pre_norm: ck.require("pre_norm")?,
        })
    }
}

/// Dropout masks drawn from a private generator; `off()` is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    pub fn train(p: f64, seed: u64) -> Self {
        Dropout { p, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Var {
        let Some(rng) = self.rng.as_mut().filter(|_| self.p > 0.0) else {
            return x;
        };
        let shape = tape.value(x).shape().to_vec();
        let keep = 1.0 - self.p;
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.mul_const(x, Tensor::new(shape, mask).unwrap())
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct MultiHead {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone, Copy)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone, Copy)]
struct EncBlock {
    attn: MultiHead,
    norm1: Norm,
    ff: FeedForward,
    norm2: Norm,
}

#[derive(Debug, Clone, Copy)]
struct DecBlock {
    self_attn: MultiHead,
    norm1: Norm,
    cross_attn: MultiHead,
    norm2: Norm,
    ff: FeedForward,
    norm3: Norm,
}

#[derive(Debug, Clone)]
pub struct S2SModel {
    config: S2SConfig,
    params: ParamStore,
    input: Linear,
    embed: ParamId,
    out_bias: ParamId,
    enc: Vec<EncBlock>,
    dec: Vec<DecBlock>,
    enc_final: Option<Norm>,
    dec_final: Option<Norm>,
}

struct Builder<'a> {
    params: ParamStore,
    init: &'a mut dyn FnMut(&str, &[usize]) -> Tensor,
}

impl Builder<'_> {
    fn tensor(&mut self, name: String, kind: &str, shape: &[usize]) -> ParamId {
        let t = (self.init)(kind, shape);
        self.params.add(name, t)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.tensor(format!("{name}.w"), "weight", &[fan_in, fan_out]),
            b: self.tensor(format!("{name}.b"), "bias", &[1, fan_out]),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gain: self.tensor(format!("{name}.gain"), "gain", &[1, d]),
            bias: self.tensor(format!("{name}.bias"), "bias", &[1, d]),
        }
    }

    fn multi_head(&mut self, name: &str, d: usize) -> MultiHead {
        MultiHead {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    fn feed_forward(&mut self, name: &str, d: usize, ff: usize) -> FeedForward {
        FeedForward {
            up: self.linear(&format!("{name}.up"), d, ff),
            down: self.linear(&format!("{name}.down"), ff, d),
        }
    }
}

/// Sinusoidal position table, `len x d`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(len, d, data)
}

impl S2SModel {
    fn build(config: S2SConfig, init: &mut dyn FnMut(&str, &[usize]) -> Tensor) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut b = Builder { params: ParamStore::new(), init };
        let input = b.linear("input", config.input_dim, d);
        let embed = b.tensor("embed".into(), "embed", &[config.vocab_size, d]);
        let out_bias = b.tensor("out.b".into(), "bias", &[1, config.vocab_size]);
        let enc = (0..config.n_enc_blocks)
            .map(|i| EncBlock {
                attn: b.multi_head(&format!("enc{i}.attn"), d),
                norm1: b.norm(&format!("enc{i}.norm1"), d),
                ff: b.feed_forward(&format!("enc{i}.ff"), d, config.ff_dim),
                norm2: b.norm(&format!("enc{i}.norm2"), d),
            })
            .collect();
        let dec = (0..config.n_dec_blocks)
            .map(|i| DecBlock {
                self_attn: b.multi_head(&format!("dec{i}.self"), d),
                norm1: b.norm(&format!("dec{i}.norm1"), d),
                cross_attn: b.multi_head(&format!("dec{i}.cross"), d),
                norm2: b.norm(&format!("dec{i}.norm2"), d),
                ff: b.feed_forward(&format!("dec{i}.ff"), d, config.ff_dim),
                norm3: b.norm(&format!("dec{i}.norm3"), d),
            })
            .collect();
        let (enc_final, dec_final) = if config.pre_norm {
            (Some(b.norm("enc.final", d)), Some(b.norm("dec.final", d)))
        } else {
            (None, None)
        };
        Ok(S2SModel { config, params: b.params, input, embed, out_bias, enc, dec, enc_final, dec_final })
    }

    /// Xavier-uniform matrices, `N(0, 1/d)` embedding, unit gains, zero biases.
    pub fn new(config: S2SConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed_dist = Normal::new(0.0, (config.d_model.max(1) as f64).powf(-0.5))
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::build(config, &mut |kind, shape| {
            let n: usize = shape.iter().product();
            let data = match kind {
                "weight" => {
                    let r = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-r..r)).collect()
                }
                "embed" => (0..n).map(|_| embed_dist.sample(&mut rng)).collect(),
                "gain" => vec![1.0; n],
                _ => vec![0.0; n],
            };
            Tensor::new(shape.to_vec(), data).unwrap()
        })
    }

    pub fn config(&self) -> &S2SConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embed
    }

    /// The output projection reuses the embedding table.
    pub fn output_weight_id(&self) -> ParamId {
        self.embed
    }

    fn linear(&self, tape: &mut Tape<'_>, x: Var, l: Linear) -> Var {
        let w = tape.param(l.w);
        let b = tape.param(l.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    fn norm(&self, tape: &mut Tape<'_>, x: Var, n: Norm) -> Var {
        let xhat = tape.layer_norm_rows(x, LN_EPS);
        let g = tape.param(n.gain);
        let b = tape.param(n.bias);
        let y = tape.mul_row(xhat, g);
        tape.add_row(y, b)
    }

    fn multi_head(&self, tape: &mut Tape<'_>, x: Var, mem: Var, mh: MultiHead, mask: Option<&[bool]>, drop: &mut Dropout) -> Var {
        let q = self.linear(tape, x, mh.q);
        let k = self.linear(tape, mem, mh.k);
        let v = self.linear(tape, mem, mh.v);
        let dk = self.config.d_model / self.config.n_heads;
        let heads: Vec<Var> = (0..self.config.n_heads)
            .map(|h| {
                let qh = tape.slice_cols(q, h * dk, dk);
                let kh = tape.slice_cols(k, h * dk, dk);
                let vh = tape.slice_cols(v, h * dk, dk);
                attention::attention_with_dropout(tape, qh, kh, vh, mask, drop)
            })
            .collect();
        let joined = tape.concat_cols(&heads);
        self.linear(tape, joined, mh.o)
    }

    fn feed_forward(&self, tape: &mut Tape<'_>, x: Var, ff: FeedForward) -> Var {
        let h = self.linear(tape, x, ff.up);
        let h = tape.relu(h);
        self.linear(tape, h, ff.down)
    }

    /// `norm(x + drop(f(x)))` post-norm, `x + drop(f(norm(x)))` pre-norm.
    fn sublayer(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        norm: Norm,
        drop: &mut Dropout,
        f: impl FnOnce(&Self, &mut Tape<'_>, Var, &mut Dropout) -> Var,
    ) -> Var {
        if self.config.pre_norm {
            let n = self.norm(tape, x, norm);
            let y = f(self, tape, n, drop);
            let y = drop.apply(tape, y);
            tape.add(x, y)
        } else {
            let y = f(self, tape, x, drop);
            let y = drop.apply(tape, y);
            let s = tape.add(x, y);
            self.norm(tape, s, norm)
        }
    }

    fn add_positions(&self, tape: &mut Tape<'_>, x: Var, drop: &mut Dropout) -> Var {
        let len = tape.value(x).rows();
        let pe = positional_encoding(len, self.config.d_model);
        let x = tape.add_const(x, &pe);
        drop.apply(tape, x)
    }

    /// Encoder over `T x input_dim` frames; returns the `T x d_model` memory.
    pub fn encode_on(&self, tape: &mut Tape<'_>, frames: &Tensor, drop: &mut Dropout) -> Result<Var> {
        if frames.cols() != self.config.input_dim || frames.rows() == 0 {
            return Err(Error::invalid(format!(
                "feature dim {} does not match the configured input dim {}",
                frames.cols(),
                self.config.input_dim
            )));
        }
        let x = tape.leaf(frames.clone());
        let x = self.linear(tape, x, self.input);
        let mut x = self.add_positions(tape, x, drop);
        for blk in &self.enc {
            x = self.sublayer(tape, x, blk.norm1, drop, |m, t, h, d| m.multi_head(t, h, h, blk.attn, None, d));
            x = self.sublayer(tape, x, blk.norm2, drop, |m, t, h, _| m.feed_forward(t, h, blk.ff));
        }
        if let Some(n) = self.enc_final {
            x = self.norm(tape, x, n);
        }
        Ok(x)
    }

    /// Logits for each input position: row `t` predicts the token after `inputs[t]`.
    pub fn decode_on(&self, tape: &mut Tape<'_>, memory: Var, inputs: &[usize], drop: &mut Dropout) -> Result<Var> {
        let k = self.config.vocab_size;
        if inputs.is_empty() {
            return Err(Error::invalid("decoder needs at least one input token"));
        }
        if let Some(&bad) = inputs.iter().find(|&&id| id >= k) {
            return Err(Error::invalid(format!("token id {bad} out of range for K={k}")));
        }
        let table = tape.param(self.embed);
        let x = tape.gather_rows(table, inputs);
        let x = tape.scale(x, (self.config.d_model as f64).sqrt());
        let mut x = self.add_positions(tape, x, drop);
        let mask = causal_mask(inputs.len());
        for blk in &self.dec {
            x = self.sublayer(tape, x, blk.norm1, drop, |m, t, h, d| {
                m.multi_head(t, h, h, blk.self_attn, Some(&mask), d)
            });
            x = self.sublayer(tape, x, blk.norm2, drop, |m, t, h, d| {
                m.multi_head(t, h, memory, blk.cross_attn, None, d)
            });
            x = self.sublayer(tape, x, blk.norm3, drop, |m, t, h, _| m.feed_forward(t, h, blk.ff));
        }
        if let Some(n) = self.dec_final {
            x = self.norm(tape, x, n);
        }
        let logits = tape.matmul_bt(x, table);
        let b = tape.param(self.out_bias);
        Ok(tape.add_row(logits, b))
    }

    pub fn encode(&self, features: &FeatureMatrix) -> Result<Tensor> {
        let mut tape = Tape::with_params(&self.params);
        let mem = self.encode_on(&mut tape, &features.to_tensor(), &mut Dropout::off())?;
        Ok(tape.value(mem).clone())
    }

    /// `(len - 1) x K` logits; row `t` predicts `tokens[t + 1]`.
    pub fn decoder_forward(&self, memory: &Tensor, tokens: &TokenSeq) -> Result<Tensor> {
        if tokens.ids.first() != Some(&SOS) || tokens.len() < 2 {
            return Err(Error::invalid("decoder input must start with <sos> and have a target"));
        }
        tokens.check_range(self.config.vocab_size)?;
        self.prefix_logits(memory, &tokens.ids[..tokens.len() - 1])
    }

    /// Logits after every prefix of `inputs`, one row per input token.
    pub fn prefix_logits(&self, memory: &Tensor, inputs: &[usize]) -> Result<Tensor> {
        if memory.cols() != self.config.d_model {
            return Err(Error::invalid("memory width does not match d_model"));
        }
        let mut tape = Tape::with_params(&self.params);
        let mem = tape.leaf(memory.clone());
        let logits = self.decode_on(&mut tape, mem, inputs, &mut Dropout::off())?;
        Ok(tape.value(logits).clone())
    }

    pub fn to_checkpoint(&self) -> CheckpointFile {
        let mut ck = CheckpointFile::default();
        ck.set("kind", "s2s");
        self.config.write_header(&mut ck);
        ck.add_params("", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &CheckpointFile) -> Result<Self> {
        if ck.get("kind") != Some("s2s") {
            return Err(Error::format("checkpoint", "not a seq2seq checkpoint"));
        }
        let config = S2SConfig::read_header(ck)?;
        let mut m = Self::build(config, &mut |_, shape| Tensor::zeros(shape))?;
        ck.load_params("", &mut m.params)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&CheckpointFile::read(path)?)
    }
}

/// Tokens emitted so far; each step re-runs the decoder over the whole prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    pub tokens: Vec<usize>,
}

impl DecoderState {
    pub fn start() -> Self {
        DecoderState { tokens: vec![SOS] }
    }

    /// Logits for the token after the current prefix.
    pub fn logits(&self, m: &S2SModel, memory: &Tensor) -> Result<Vec<f64>> {
        let all = m.prefix_logits(memory, &self.tokens)?;
        Ok(all.row(all.rows() - 1).to_vec())
    }

    pub fn push(&self, token: usize) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        DecoderState { tokens }
    }
}
