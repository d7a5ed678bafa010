//! Losses for every label mode, the warmup schedule, and the seq2seq
//! training loop with best-on-dev checkpointing.

mod losses;
mod schedule;

pub use losses::{
    build_target_distribution, ce_loss, combined_loss, interpolate, kl_divergence, lst_loss, set_lst_sign_fault,
    soft_target_loss, unigram_prior, LabelMode, UnigramFloor,
};
pub use schedule::adam_warmup_lr;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::CheckpointFile;
use crate::corpus::text::{read_lines, write_string};
use crate::error::{Error, Result};
use crate::frontend::Utterance;
use crate::lm::{precompute_soft_labels, RecurrentLM};
use crate::numerics::{gradient, LabelDistribution, Tape, Tensor, Var};
use crate::optim::Adam;
use crate::seq2seq::{Dropout, S2SModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub label_mode: LabelMode,
    pub lambda: f64,
    pub temperature: f64,
    pub unigram_floor: UnigramFloor,
    /// Keep only the M most likely teacher entries (renormalized).
    pub soft_top_m: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub k: f64,
    pub warmup: u64,
    pub epochs: usize,
    /// Upper bound on the summed encoder frames of one batch.
    pub batch_frames: usize,
    pub clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            label_mode: LabelMode::Hard,
            lambda: 0.9,
            temperature: 5.0,
            unigram_floor: UnigramFloor::NormalizedFrequencies,
            soft_top_m: None,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            k: 1.0,
            warmup: 200,
            epochs: 20,
            batch_frames: 400,
            clip: None,
            seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value for {key}: {value:?}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "label_mode" => self.label_mode = value.parse()?,
            "lambda" => self.lambda = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "unigram_floor" => self.unigram_floor = value.parse()?,
            "soft_top_m" => self.soft_top_m = parse_opt(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_frames" => self.batch_frames = parse(key, value)?,
            "clip" => self.clip = parse_opt(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::invalid(format!("unknown training key {other:?}"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let floor = match self.unigram_floor {
            UnigramFloor::NormalizedFrequencies => "normalized",
            UnigramFloor::RawCounts => "raw",
        };
        vec![
            ("label_mode", self.label_mode.to_string()),
            ("lambda", self.lambda.to_string()),
            ("temperature", self.temperature.to_string()),
            ("unigram_floor", floor.to_string()),
            ("soft_top_m", show_opt(&self.soft_top_m)),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("k", self.k.to_string()),
            ("warmup", self.warmup.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_frames", self.batch_frames.to_string()),
            ("clip", show_opt(&self.clip)),
            ("seed", self.seed.to_string()),
        ]
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&read_lines(path)?.join("\n"))
    }

    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.warmup == 0 || !(self.k > 0.0) || self.batch_frames == 0 {
            return Err(Error::invalid("warmup, k and batch_frames must be positive"));
        }
        Ok(())
    }
}

/// Model, optimizer state, and the epoch/dev cross-entropy it was taken at.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: S2SModel,
    pub optimizer: Adam,
    pub epoch: usize,
    pub dev_ce: f64,
}

impl Checkpoint {
    pub fn to_file(&self) -> CheckpointFile {
        let mut ck = self.model.to_checkpoint();
        ck.set("epoch", self.epoch);
        ck.set("dev_ce", self.dev_ce);
        ck.set("adam_step", self.optimizer.step);
        ck.set("adam_beta1", self.optimizer.beta1);
        ck.set("adam_beta2", self.optimizer.beta2);
        ck.set("adam_eps", self.optimizer.eps);
        let store = self.model.params();
        for id in store.ids() {
            let name = store.name(id);
            ck.tensors.push((format!("adam.m.{name}"), self.optimizer.first_moment[id.index()].clone()));
            ck.tensors.push((format!("adam.v.{name}"), self.optimizer.second_moment[id.index()].clone()));
        }
        ck
    }

    pub fn from_file(ck: &CheckpointFile) -> Result<Self> {
        let model = S2SModel::from_checkpoint(ck)?;
        let store = model.params();
        let mut optimizer = Adam::new(store, ck.require("adam_beta1")?, ck.require("adam_beta2")?, ck.require("adam_eps")?);
        optimizer.step = ck.require("adam_step")?;
        for id in store.ids() {
            let name = store.name(id);
            optimizer.first_moment[id.index()] = ck.tensor(&format!("adam.m.{name}"))?.clone();
            optimizer.second_moment[id.index()] = ck.tensor(&format!("adam.v.{name}"))?.clone();
        }
        Ok(Checkpoint { model, optimizer, epoch: ck.require("epoch")?, dev_ce: ck.require("dev_ce")? })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&CheckpointFile::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_ce: f64,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("epoch,train_loss,dev_ce\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.dev_ce));
    }
    out
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_string(path, &curves_csv(rows))
}

/// Where LST soft labels come from.
#[derive(Debug, Clone, Copy)]
pub enum Teacher<'a> {
    None,
    /// Computed once up front at the configured temperature.
    Model(&'a RecurrentLM),
    /// Aligned with the training utterances, one distribution per predicted token.
    Precomputed(&'a [Vec<LabelDistribution>]),
}

pub trait TrainHooks {
    fn on_epoch(&mut self, _row: &CurveRow) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub curves: Vec<CurveRow>,
}

/// Groups utterance indices, shortest first, so each group's frame total
/// stays within `budget` (a longer utterance gets a group of its own).
pub fn frame_budget_batches(frames: &[usize], budget: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| (frames[i], i));
    let mut batches = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut used = 0;
    for i in order {
        if !cur.is_empty() && used + frames[i] > budget {
            batches.push(std::mem::take(&mut cur));
            used = 0;
        }
        cur.push(i);
        used += frames[i];
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches
}

/// Per-step targets of one utterance as a `(len - 1) x K` matrix.
pub fn utterance_targets(
    utt: &Utterance,
    config: &TrainConfig,
    k: usize,
    teacher: Option<&[LabelDistribution]>,
    unigram: Option<&LabelDistribution>,
) -> Result<Tensor> {
    let ids = &utt.tokens.ids;
    let steps = ids.len().saturating_sub(1);
    if let Some(t) = teacher {
        if t.len() != steps {
            return Err(Error::invalid(format!(
                "utterance {}: {} teacher distributions for {steps} steps",
                utt.id,
                t.len()
            )));
        }
    }
    let mut out = Tensor::zeros(&[steps, k]);
    for t in 0..steps {
        let d = build_target_distribution(config.label_mode, ids[t + 1], teacher.map(|x| &x[t]), config.lambda, k, unigram)?;
        out.row_mut(t).copy_from_slice(d.probs());
    }
    Ok(out)
}

/// Soft-target cross-entropy summed over a batch, scaled by `1 / tokens`.
fn batch_objective(
    model: &S2SModel,
    tape: &mut Tape<'_>,
    utts: &[&Utterance],
    targets: &[&Tensor],
    drop: &mut Dropout,
) -> Result<Var> {
    let tokens: usize = targets.iter().map(|t| t.rows()).sum();
    let mut total: Option<Var> = None;
    for (u, tgt) in utts.iter().zip(targets) {
        let mem = model.encode_on(tape, &u.features.to_tensor(), drop)?;
        let ids = &u.tokens.ids;
        let logits = model.decode_on(tape, mem, &ids[..ids.len() - 1], drop)?;
        let lp = tape.log_softmax_rows(logits);
        let loss = tape.dot_const(lp, tgt.map(|p| -p / tokens as f64));
        total = Some(match total {
            Some(acc) => tape.add(acc, loss),
            None => loss,
        });
    }
    total.ok_or_else(|| Error::invalid("empty batch"))
}

fn check_utterances(set: &[Utterance], what: &str, k: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    for u in set {
        if u.tokens.len() < 2 || u.tokens.ids[0] != crate::corpus::SOS {
            return Err(Error::invalid(format!("utterance {}: transcript must be <sos> ... with a target", u.id)));
        }
        u.tokens.check_range(k)?;
    }
    Ok(())
}

/// Mean hard-label cross-entropy per predicted token, without dropout.
pub fn dev_cross_entropy(model: &S2SModel, dev: &[Utterance]) -> Result<f64> {
    let k = model.config().vocab_size;
    check_utterances(dev, "dev", k)?;
    let (mut total, mut n) = (0.0, 0usize);
    for u in dev {
        let mem = model.encode(&u.features)?;
        let logits = model.decoder_forward(&mem, &u.tokens)?;
        for (t, &y) in u.tokens.ids[1..].iter().enumerate() {
            total += ce_loss(logits.row(t), y)?;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

fn step_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 32) ^ step as u64
}

/// Adam with warmup over frame-budget batches; keeps the epoch with the lowest dev CE.
pub fn train(
    mut model: S2SModel,
    data: &[Utterance],
    dev: &[Utterance],
    config: &TrainConfig,
    teacher: Teacher<'_>,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome> {
    config.validate()?;
    let k = model.config().vocab_size;
    check_utterances(data, "training", k)?;
    check_utterances(dev, "dev", k)?;

    let computed;
    let soft: Option<&[Vec<LabelDistribution>]> = match (config.label_mode, teacher) {
        (LabelMode::Lst, Teacher::None) => {
            return Err(Error::invalid("lst mode needs a teacher model or soft-label cache"));
        }
        (LabelMode::Lst, Teacher::Model(lm)) => {
            if lm.vocab_size() != k {
                return Err(Error::invalid("teacher and student vocabularies differ"));
            }
            let corpus: Vec<_> = data.iter().map(|u| u.tokens.clone()).collect();
            computed = precompute_soft_labels(lm, &corpus, config.temperature, config.soft_top_m)?;
            Some(&computed[..])
        }
        (LabelMode::Lst, Teacher::Precomputed(p)) => {
            if p.len() != data.len() {
                return Err(Error::invalid(format!(
                    "{} soft-label sentences for {} utterances",
                    p.len(),
                    data.len()
                )));
            }
            Some(p)
        }
        _ => None,
    };
    let unigram = match config.label_mode {
        LabelMode::UnigramOriginal | LabelMode::UnigramSmoothed => {
            let floor = (config.label_mode == LabelMode::UnigramSmoothed).then_some(config.unigram_floor);
            let corpus: Vec<_> = data.iter().map(|u| u.tokens.clone()).collect();
            Some(unigram_prior(&corpus, k, floor)?)
        }
        _ => None,
    };
    let targets = data
        .iter()
        .enumerate()
        .map(|(i, u)| utterance_targets(u, config, k, soft.map(|s| &s[i][..]), unigram.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let frames: Vec<usize> = data.iter().map(|u| u.features.rows()).collect();
    let mut batches = frame_budget_batches(&frames, config.batch_frames);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(model.params(), config.beta1, config.beta2, config.eps);
    let d_model = model.config().d_model;
    let p_drop = model.config().dropout;

    let mut best = Checkpoint { model: model.clone(), optimizer: opt.clone(), epoch: 0, dev_ce: dev_cross_entropy(&model, dev)? };
    let mut curves = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        batches.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0, 0usize);
        for (step, batch) in batches.iter().enumerate() {
            let utts: Vec<&Utterance> = batch.iter().map(|&i| &data[i]).collect();
            let tgts: Vec<&Tensor> = batch.iter().map(|&i| &targets[i]).collect();
            let tokens: usize = tgts.iter().map(|t| t.rows()).sum();
            let mut grads = {
                let mut tape = Tape::with_params(model.params());
                let mut drop = Dropout::train(p_drop, step_seed(config.seed, epoch, step));
                let loss = batch_objective(&model, &mut tape, &utts, &tgts, &mut drop)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::TrainingFailure { epoch, step, reason: format!("loss is {value}") });
                }
                sum += value * tokens as f64;
                n += tokens;
                gradient(&tape, loss)?
            };
            if let Some(c) = config.clip {
                grads.clip_global_norm(c);
            }
            if !grads.global_norm().is_finite() {
                return Err(Error::TrainingFailure { epoch, step, reason: "gradient is not finite".into() });
            }
            let lr = adam_warmup_lr(opt.step + 1, config.k, d_model, config.warmup)?;
            opt.update(model.params_mut(), &grads, lr);
        }
        let dev_ce = dev_cross_entropy(&model, dev)?;
        if !dev_ce.is_finite() {
            return Err(Error::TrainingFailure { epoch, step: batches.len(), reason: "dev cross-entropy is not finite".into() });
        }
        let row = CurveRow { epoch, train_loss: sum / n as f64, dev_ce };
        hooks.on_epoch(&row);
        curves.push(row);
        if epoch == 1 || dev_ce < best.dev_ce {
            best = Checkpoint { model: model.clone(), optimizer: opt.clone(), epoch, dev_ce };
        }
    }
    Ok(TrainOutcome { best, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TokenSeq, EOS, SOS};
    use crate::frontend::FeatureMatrix;
    use crate::seq2seq::S2SConfig;

    fn toy_set(n: usize, offset: usize) -> Vec<Utterance> {
        (0..n)
            .map(|i| {
                let a = 3 + (i + offset) % 3;
                let b = 3 + (i + offset + 1) % 3;
                let mut data = Vec::new();
                for tok in [a, b] {
                    let mut row = vec![0.0; 4];
                    row[tok - 3] = 1.0;
                    data.extend(row);
                }
                Utterance {
                    id: format!("u{i:03}"),
                    features: FeatureMatrix::new(2, 4, data).unwrap(),
                    tokens: TokenSeq::new(vec![SOS, a, b, EOS]),
                }
            })
            .collect()
    }

    fn tiny_model(seed: u64) -> S2SModel {
        let mut cfg = S2SConfig::desk(4, 6);
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.ff_dim = 32;
        cfg.n_enc_blocks = 1;
        cfg.n_dec_blocks = 1;
        cfg.dropout = 0.0;
        S2SModel::new(cfg, seed).unwrap()
    }

    #[test]
    fn config_text_round_trip() {
        let mut c = TrainConfig { label_mode: LabelMode::UnigramSmoothed, clip: Some(2.5), ..Default::default() };
        c.soft_top_m = Some(4);
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(back.apply_text("nonsense = 1").is_err());
        assert!(back.apply_text("lambda").is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let m = tiny_model(1);
        let out = train(m.clone(), &toy_set(6, 0), &toy_set(3, 1), &cfg, Teacher::None, &mut NoHooks).unwrap();
        assert!(out.curves.is_empty());
        assert_eq!(out.best.epoch, 0);
        for id in m.params().ids() {
            assert_eq!(out.best.model.params().get(id), m.params().get(id));
        }
    }

    #[test]
    fn dev_ce_improves_and_runs_repeat() {
        let cfg = TrainConfig { epochs: 12, warmup: 20, batch_frames: 8, ..Default::default() };
        let run = || train(tiny_model(2), &toy_set(24, 0), &toy_set(6, 1), &cfg, Teacher::None, &mut NoHooks).unwrap();
        let out = run();
        assert_eq!(out.curves.len(), 12);
        assert!(out.curves.iter().all(|r| r.train_loss.is_finite() && r.dev_ce.is_finite()));
        assert!(out.curves.last().unwrap().dev_ce < out.curves[0].dev_ce);
        let min = out.curves.iter().map(|r| r.dev_ce).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best.dev_ce, min);
        assert_eq!(run().curves, out.curves);
    }

    #[test]
    fn lst_without_teacher_is_rejected() {
        let cfg = TrainConfig { label_mode: LabelMode::Lst, ..Default::default() };
        let err = train(tiny_model(0), &toy_set(2, 0), &toy_set(2, 0), &cfg, Teacher::None, &mut NoHooks).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = TrainConfig { epochs: 1, batch_frames: 8, ..Default::default() };
        let out = train(tiny_model(3), &toy_set(6, 0), &toy_set(2, 0), &cfg, Teacher::None, &mut NoHooks).unwrap();
        let back = Checkpoint::from_file(&CheckpointFile::from_bytes(&out.best.to_file().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.optimizer, out.best.optimizer);
        assert_eq!(back.dev_ce, out.best.dev_ce);
        let u = &toy_set(1, 0)[0];
        assert_eq!(back.model.encode(&u.features).unwrap(), out.best.model.encode(&u.features).unwrap());
    }

    #[test]
    fn batches_respect_budget() {
        let b = frame_budget_batches(&[5, 1, 3, 9, 2], 6);
        assert_eq!(b, vec![vec![1, 4, 2], vec![0], vec![3]]);
    }
}
