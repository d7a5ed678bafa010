//! Property checks behind `verify`: loss algebra, gradients, degenerate label
//! modes, temperature limits, search, scoring, n-gram normalization and the
//! learning-rate schedule. Each check compares against an oracle that does
//! not share code with the path under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{TokenSeq, EOS, SOS};
use crate::decoding::{beam_search_memory, cer, greedy_decode, BeamOptions, Recognizer};
use crate::error::{Error, Result};
use crate::frontend::{FeatureMatrix, Utterance};
use crate::lm::{kn_train, IncrementalLm};
use crate::numerics::{
    finite_difference_gradient, gradient, log_softmax, max_relative_error, softmax_with_temperature, LabelDistribution,
    ParamStore, Tape, Tensor,
};
use crate::seq2seq::{Dropout, S2SConfig, S2SModel};
use crate::training::{
    adam_warmup_lr, build_target_distribution, ce_loss, combined_loss, interpolate, lst_loss, soft_target_loss, train,
    unigram_prior, LabelMode, NoHooks, Teacher, TrainConfig, UnigramFloor,
};

pub const GROUPS: [&str; 8] = ["equivalence", "gradients", "identities", "temperature", "beam", "cer", "kn", "schedule"];

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub group: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(group: &'static str, name: impl Into<String>, outcome: Result<(bool, String)>) -> Check {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check { group, name: name.into(), passed, detail }
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize, sparse: bool) -> LabelDistribution {
    loop {
        let w: Vec<f64> = (0..k)
            .map(|_| if sparse && rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        if let Ok(d) = LabelDistribution::normalized(w) {
            return d;
        }
    }
}

fn random_logits(rng: &mut ChaCha8Rng, rows: usize, k: usize, bound: f64) -> Tensor {
    Tensor::matrix(rows, k, (0..rows * k).map(|_| rng.random_range(-bound..bound)).collect())
}

/// Largest gap between the weighted-loss form and the interpolated-label form.
pub fn loss_form_gap(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.random_range(2..=12);
        let steps = rng.random_range(1..=5);
        let logits = random_logits(&mut rng, steps, k, 5.0);
        let lambda = rng.random_range(0.0..=1.0);
        let truth: Vec<usize> = (0..steps).map(|_| rng.random_range(0..k)).collect();
        let teacher: Vec<LabelDistribution> = (0..steps).map(|_| random_distribution(&mut rng, k, true)).collect();
        let weighted = combined_loss(&logits, &truth, &teacher, lambda)?;
        let targets = truth
            .iter()
            .zip(&teacher)
            .map(|(&y, p)| interpolate(y, p, lambda))
            .collect::<Result<Vec<_>>>()?;
        worst = worst.max((weighted - soft_target_loss(&logits, &targets)?).abs());
    }
    Ok(worst)
}

/// Gradient of `mean_t -sum_k target_tk log softmax(x_t)_k` from the tape.
fn tape_soft_target_gradient(logits: &Tensor, targets: &[LabelDistribution]) -> Result<Tensor> {
    let store = ParamStore::new();
    let mut tape = Tape::with_params(&store);
    let x = tape.leaf(logits.clone());
    let lp = tape.log_softmax_rows(x);
    let n = targets.len() as f64;
    let mut w = Tensor::zeros(logits.shape());
    for (t, d) in targets.iter().enumerate() {
        for (dst, p) in w.row_mut(t).iter_mut().zip(d.probs()) {
            *dst = -p / n;
        }
    }
    let loss = tape.dot_const(lp, w);
    let grads = gradient(&tape, loss)?;
    grads.wrt(x).cloned().ok_or_else(|| Error::invalid("logits are not on the tape"))
}

/// Relative finite-difference error of the training-path gradient for each
/// loss: plain CE, LST, the combined form, and every label mode.
pub fn loss_gradient_errors(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, steps) = (7, 4);
    let logits = random_logits(&mut rng, steps, k, 3.0);
    let truth: Vec<usize> = (0..steps).map(|_| rng.random_range(3..k)).collect();
    let teacher: Vec<LabelDistribution> = (0..steps).map(|_| random_distribution(&mut rng, k, false)).collect();
    let lambda = 0.7;
    let corpus: Vec<TokenSeq> = (0..5)
        .map(|_| {
            let mut ids = vec![SOS];
            ids.extend((0..6).map(|_| rng.random_range(3..k)));
            ids.push(EOS);
            TokenSeq::new(ids)
        })
        .collect();
    let mean = |f: &dyn Fn(&[f64], usize) -> Result<f64>, x: &Tensor| -> f64 {
        (0..steps).map(|t| f(x.row(t), t).unwrap_or(f64::NAN)).sum::<f64>() / steps as f64
    };

    let mut out = Vec::new();
    let mut push = |name: &str, targets: Vec<LabelDistribution>, f: &dyn Fn(&Tensor) -> f64| -> Result<()> {
        let analytic = tape_soft_target_gradient(&logits, &targets)?;
        let numeric = finite_difference_gradient(f, &logits, FD_EPS);
        out.push((name.to_string(), max_relative_error(&analytic, &numeric, FD_FLOOR)));
        Ok(())
    };
    let one_hots = truth.iter().map(|&y| LabelDistribution::one_hot(k, y)).collect::<Result<Vec<_>>>()?;
    push("ce", one_hots, &|x| mean(&|row, t| ce_loss(row, truth[t]), x))?;
    push("lst", teacher.clone(), &|x| mean(&|row, t| lst_loss(row, &teacher[t]), x))?;
    let mixed = truth
        .iter()
        .zip(&teacher)
        .map(|(&y, p)| interpolate(y, p, lambda))
        .collect::<Result<Vec<_>>>()?;
    push("combined", mixed, &|x| combined_loss(x, &truth, &teacher, lambda).unwrap_or(f64::NAN))?;
    for mode in LabelMode::ALL {
        let unigram = match mode {
            LabelMode::UnigramOriginal => Some(unigram_prior(&corpus, k, None)?),
            LabelMode::UnigramSmoothed => Some(unigram_prior(&corpus, k, Some(UnigramFloor::NormalizedFrequencies))?),
            _ => None,
        };
        let targets = truth
            .iter()
            .zip(&teacher)
            .map(|(&y, p)| build_target_distribution(mode, y, Some(p), lambda, k, unigram.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let f = |x: &Tensor| soft_target_loss(x, &targets).unwrap_or(f64::NAN);
        push(&format!("mode {mode}"), targets.clone(), &f)?;
    }
    Ok(out)
}

pub fn tiny_model_config(pre_norm: bool) -> S2SConfig {
    S2SConfig {
        input_dim: 5,
        d_model: 8,
        n_heads: 2,
        n_enc_blocks: 1,
        n_dec_blocks: 1,
        ff_dim: 16,
        vocab_size: 6,
        dropout: 0.0,
        pre_norm,
    }
}

/// Largest per-parameter relative error of the full model's gradient.
pub fn model_gradient_error(seed: u64, pre_norm: bool) -> Result<f64> {
    let m = S2SModel::new(tiny_model_config(pre_norm), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let frames = random_logits(&mut rng, 4, 5, 1.0);
    let inputs = [SOS, 3, 5];
    let targets = [3usize, 5, EOS];
    let loss_of = |store: &ParamStore, grad: bool| -> Result<(f64, Option<crate::numerics::Gradients>)> {
        let mut tape = Tape::with_params(store);
        let mut drop = Dropout::off();
        let mem = m.encode_on(&mut tape, &frames, &mut drop)?;
        let logits = m.decode_on(&mut tape, mem, &inputs, &mut drop)?;
        let lp = tape.log_softmax_rows(logits);
        let mut w = Tensor::zeros(&[3, 6]);
        for (t, &y) in targets.iter().enumerate() {
            w.row_mut(t)[y] = -1.0;
        }
        let loss = tape.dot_const(lp, w);
        let g = if grad { Some(gradient(&tape, loss)?) } else { None };
        Ok((tape.value(loss).item(), g))
    };
    let g = loss_of(m.params(), true)?.1.expect("gradient requested");
    let mut worst: f64 = 0.0;
    for id in m.params().ids() {
        let numeric = finite_difference_gradient(
            |x| {
                let mut store = m.params().clone();
                store.set(id, x.clone());
                loss_of(&store, false).map(|r| r.0).unwrap_or(f64::NAN)
            },
            m.params().get(id),
            FD_EPS,
        );
        worst = worst.max(max_relative_error(&g.param(id), &numeric, FD_FLOOR));
    }
    Ok(worst)
}

/// Number of `(K, y, lambda)` cases where uniform smoothing and LST with a
/// uniform teacher produce different bits.
pub fn uniform_smoothing_mismatches(seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for k in 3..=12 {
        let uniform = LabelDistribution::uniform(k);
        let mut lambdas = vec![0.0, 0.1, 0.5, 0.9, 1.0];
        lambdas.extend((0..5).map(|_| rng.random_range(0.0..=1.0)));
        for y in 0..k {
            for &l in &lambdas {
                let a = build_target_distribution(LabelMode::UniformSmooth, y, None, l, k, None)?;
                let b = build_target_distribution(LabelMode::Lst, y, Some(&uniform), l, k, None)?;
                let same = a.probs().iter().zip(b.probs()).all(|(p, q)| p.to_bits() == q.to_bits());
                bad += usize::from(!same);
            }
        }
    }
    Ok(bad)
}

fn tiny_utterances(seed: u64, n: usize, prefix: &str) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=3);
            let mut ids = vec![SOS];
            ids.extend((0..len).map(|_| rng.random_range(3..6)));
            ids.push(EOS);
            let rows = 2 * len;
            let data = (0..rows * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
            Utterance {
                id: format!("{prefix}{i}"),
                features: FeatureMatrix::new(rows, 5, data).expect("shape is consistent"),
                tokens: TokenSeq::new(ids),
            }
        })
        .collect()
}

/// `|first-epoch loss (hard) - first-epoch loss (lst, lambda = 1)|`.
pub fn lambda_one_gap(seed: u64) -> Result<f64> {
    let data = tiny_utterances(seed, 8, "t");
    let dev = tiny_utterances(seed + 1, 2, "d");
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let soft: Vec<Vec<LabelDistribution>> = data
        .iter()
        .map(|u| (1..u.tokens.len()).map(|_| random_distribution(&mut rng, 6, false)).collect())
        .collect();
    let mut cfg = tiny_model_config(false);
    cfg.dropout = 0.1;
    let run = |mode: LabelMode| -> Result<f64> {
        let model = S2SModel::new(cfg, seed)?;
        let tc = TrainConfig { label_mode: mode, lambda: 1.0, epochs: 1, batch_frames: 8, seed, ..TrainConfig::default() };
        let out = train(model, &data, &dev, &tc, Teacher::Precomputed(&soft), &mut NoHooks)?;
        Ok(out.curves[0].train_loss)
    };
    Ok((run(LabelMode::Hard)? - run(LabelMode::Lst)?).abs())
}

/// `|combined(lambda = 0, teacher = one-hot truth) - mean CE|`, worst case.
pub fn one_hot_teacher_gap(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.random_range(2..=10);
        let steps = rng.random_range(1..=4);
        let logits = random_logits(&mut rng, steps, k, 5.0);
        let truth: Vec<usize> = (0..steps).map(|_| rng.random_range(0..k)).collect();
        let teacher = truth.iter().map(|&y| LabelDistribution::one_hot(k, y)).collect::<Result<Vec<_>>>()?;
        let combined = combined_loss(&logits, &truth, &teacher, 0.0)?;
        let ce: f64 = (0..steps)
            .map(|t| {
                let row = logits.row(t);
                let norm = row.iter().map(|z| z.exp()).sum::<f64>().ln();
                norm - row[truth[t]]
            })
            .sum::<f64>()
            / steps as f64;
        worst = worst.max((combined - ce).abs());
    }
    Ok(worst)
}

/// `(max |p_k - 1/K| at T = 1e6, max |p - softmax| at T = 1)`.
pub fn temperature_limits(seed: u64, trials: usize) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut flat, mut plain): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        let k = rng.random_range(2..=50);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-20.0..20.0)).collect();
        let hot = softmax_with_temperature(&z, 1e6)?;
        flat = hot.probs().iter().map(|p| (p - 1.0 / k as f64).abs()).fold(flat, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let total: f64 = exps.iter().sum();
        let one = softmax_with_temperature(&z, 1.0)?;
        plain = one.probs().iter().zip(&exps).map(|(p, e)| (p - e / total).abs()).fold(plain, f64::max);
    }
    Ok((flat, plain))
}

/// Next-token distribution is a fixed pseudo-random function of the prefix.
#[derive(Debug, Clone, Copy)]
pub struct TableModel {
    pub k: usize,
    pub seed: u64,
}

impl TableModel {
    fn log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let mut h = self.seed;
        for &t in prefix {
            h = h.wrapping_mul(0x100_0000_01b3).wrapping_add(t as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits: Vec<f64> = (0..self.k).map(|_| rng.random_range(-2.0..2.0)).collect();
        log_softmax(&logits)
    }
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
        Ok(self.log_probs(prefix))
    }
}

impl IncrementalLm for TableModel {
    type State = Vec<usize>;

    fn vocab_size(&self) -> usize {
        self.k
    }

    fn initial_state(&self) -> Vec<usize> {
        Vec::new()
    }

    fn advance(&self, state: &Vec<usize>, prev: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut next = state.clone();
        next.push(prev);
        Ok((self.log_probs(&next), next))
    }
}

/// Best complete output by brute force: every token string that either ends
/// in `<eos>` or reaches `max_len`, scored by the summed fused log-probability.
pub fn exhaustive_best(model: &TableModel, lm: &TableModel, w: f64, max_len: usize) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack = vec![(vec![SOS], 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        let s2s = model.log_probs(&prefix);
        let lmp = lm.log_probs(&prefix);
        for tok in 0..model.k {
            let s = score + if w > 0.0 { s2s[tok] + w * lmp[tok] } else { s2s[tok] };
            let mut seq = prefix.clone();
            seq.push(tok);
            if tok == EOS || seq.len() - 1 == max_len {
                let better = match &best {
                    None => true,
                    Some((b, bs)) => s > *bs || (s == *bs && (seq.len(), &seq) < (b.len(), b)),
                };
                if better {
                    best = Some((seq, s));
                }
            } else {
                stack.push((seq, s));
            }
        }
    }
    best.expect("at least one complete output")
}

/// `(oracle disagreements, beam-1 vs greedy disagreements)` over random tables.
pub fn beam_oracle_mismatches(seed: u64, tables: u64) -> Result<(usize, usize)> {
    let (k, max_len) = (3, 3);
    let (mut oracle_bad, mut greedy_bad) = (0, 0);
    let dummy = FeatureMatrix::new(1, 1, vec![0.0])?;
    for i in 0..tables {
        let model = TableModel { k, seed: seed.wrapping_mul(1000) + i };
        let lm = TableModel { k, seed: !(seed.wrapping_mul(1000) + i) };
        for w in [0.0, 0.1, 1.0] {
            let (want, want_score) = exhaustive_best(&model, &lm, w, max_len);
            for beam in [27, 40] {
                let opts = BeamOptions { beam, max_len, fusion_weight: w, length_norm: false };
                let got = beam_search_memory(&model, &(), &opts, Some(&lm))?;
                let close = (got.score - want_score).abs() <= 1e-12;
                oracle_bad += usize::from(got.tokens != want || !close);
            }
        }
        let opts = BeamOptions { beam: 1, max_len, ..BeamOptions::default() };
        let b1 = beam_search_memory::<_, TableModel>(&model, &(), &opts, None)?;
        let g = greedy_decode(&model, &dummy, max_len)?;
        greedy_bad += usize::from(b1.tokens != g.tokens || b1.score != g.score);
    }
    Ok((oracle_bad, greedy_bad))
}

/// Plain Levenshtein distance with two rolling rows.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `(pairs where CER disagrees with the DP oracle, identity/empty failures)`.
pub fn cer_oracle_mismatches(seed: u64, pairs: usize) -> Result<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut edge_bad) = (0, 0);
    let wrap = |chars: &[usize]| {
        let mut ids = vec![SOS];
        ids.extend_from_slice(chars);
        ids.push(EOS);
        TokenSeq::new(ids)
    };
    for _ in 0..pairs {
        let alphabet = rng.random_range(2..=6);
        let r: Vec<usize> = (0..rng.random_range(1..=15)).map(|_| 3 + rng.random_range(0..alphabet)).collect();
        let h: Vec<usize> = (0..rng.random_range(0..=15)).map(|_| 3 + rng.random_range(0..alphabet)).collect();
        let c = cer(&wrap(&r), &wrap(&h))?;
        let d = levenshtein(&r, &h);
        let rate = 100.0 * d as f64 / r.len() as f64;
        bad += usize::from(c.errors() != d || c.rate != rate || c.ref_len != r.len());
        edge_bad += usize::from(cer(&wrap(&r), &wrap(&r))?.rate != 0.0);
        edge_bad += usize::from(cer(&wrap(&r), &wrap(&[]))?.rate != 100.0);
    }
    Ok((bad, edge_bad))
}

/// Worst `|sum_k P(k | ctx) - 1|` over random contexts at orders 1 to 3.
pub fn kn_normalization_error(seed: u64, contexts: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 8;
    let corpus: Vec<TokenSeq> = (0..30)
        .map(|_| {
            let mut ids = vec![SOS];
            ids.extend((0..rng.random_range(1..=8)).map(|_| rng.random_range(3..k - 1)));
            ids.push(EOS);
            TokenSeq::new(ids)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for order in 1..=3 {
        let m = kn_train(&corpus, order, k)?;
        for _ in 0..contexts {
            let ctx: Vec<usize> = (0..rng.random_range(0..=3)).map(|_| rng.random_range(0..k)).collect();
            let total: f64 = (0..k).map(|tok| m.prob(&ctx, tok)).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    Ok(worst)
}

/// `(|lr(8000) - closed form|, schedules that are not unimodal)`.
pub fn schedule_checks() -> Result<(f64, usize)> {
    let spot = adam_warmup_lr(8000, 0.5, 512, 8000)?;
    let expected = 0.5 * 512f64.powf(-0.5) * 8000f64.powf(-0.5);
    let mut bad = 0;
    for (k, d, warmup) in [(0.5, 512, 8000u64), (1.0, 32, 200), (2.0, 64, 1)] {
        let lrs = (1..=10 * warmup).map(|n| adam_warmup_lr(n, k, d, warmup)).collect::<Result<Vec<_>>>()?;
        let peak = lrs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        let rising = lrs[..=peak].windows(2).all(|w| w[0] < w[1]);
        let falling = lrs[peak..].windows(2).all(|w| w[0] >= w[1]);
        bad += usize::from(!(rising && falling) || peak + 1 != warmup as usize);
    }
    Ok(((spot - expected).abs(), bad))
}

fn run_group(group: &'static str, seed: u64) -> Vec<Check> {
    let tol = |v: f64, t: f64| (v <= t, format!("{v:.3e} (limit {t:.0e})"));
    match group {
        "equivalence" => vec![check(
            group,
            "weighted-loss and interpolated-label forms agree on 1000 triples",
            loss_form_gap(seed, 1000).map(|g| tol(g, 1e-9)),
        )],
        "gradients" => {
            let mut out = match loss_gradient_errors(seed) {
                Ok(errs) => errs
                    .into_iter()
                    .map(|(name, e)| check(group, format!("{name} loss gradient"), Ok(tol(e, FD_TOLERANCE))))
                    .collect(),
                Err(e) => vec![check(group, "loss gradients", Err(e))],
            };
            for (pre, name) in [(false, "post-norm"), (true, "pre-norm")] {
                out.push(check(
                    group,
                    format!("tiny {name} model gradient"),
                    model_gradient_error(seed, pre).map(|e| tol(e, FD_TOLERANCE)),
                ));
            }
            out
        }
        "identities" => vec![
            check(
                group,
                "uniform smoothing equals lst with a uniform teacher, bitwise",
                uniform_smoothing_mismatches(seed).map(|n| (n == 0, format!("{n} mismatching targets"))),
            ),
            check(group, "lambda = 1 equals hard-label training", lambda_one_gap(seed).map(|g| tol(g, 1e-12))),
            check(
                group,
                "one-hot teacher with lambda = 0 equals cross-entropy",
                one_hot_teacher_gap(seed, 200).map(|g| tol(g, 1e-12)),
            ),
        ],
        "temperature" => match temperature_limits(seed, 200) {
            Ok((flat, plain)) => vec![
                check(group, "T = 1e6 is uniform within 1e-4", Ok(tol(flat, 1e-4))),
                check(group, "T = 1 is the plain softmax", Ok(tol(plain, 1e-12))),
            ],
            Err(e) => vec![check(group, "temperature limits", Err(e))],
        },
        "beam" => match beam_oracle_mismatches(seed, 30) {
            Ok((oracle, greedy)) => vec![
                check(group, "wide beam equals exhaustive search", Ok((oracle == 0, format!("{oracle} mismatches")))),
                check(group, "beam 1 equals greedy", Ok((greedy == 0, format!("{greedy} mismatches")))),
            ],
            Err(e) => vec![check(group, "beam oracle", Err(e))],
        },
        "cer" => match cer_oracle_mismatches(seed, 1000) {
            Ok((bad, edge)) => vec![
                check(group, "CER matches the edit-distance oracle on 1000 pairs", Ok((bad == 0, format!("{bad} mismatches")))),
                check(group, "identity is 0% and empty hypothesis 100%", Ok((edge == 0, format!("{edge} failures")))),
            ],
            Err(e) => vec![check(group, "cer oracle", Err(e))],
        },
        "kn" => vec![check(
            group,
            "Kneser-Ney distributions sum to one at orders 1-3",
            kn_normalization_error(seed, 100).map(|e| tol(e, 1e-6)),
        )],
        "schedule" => match schedule_checks() {
            Ok((spot, bad)) => vec![
                check(group, "lr(8000) matches the closed form", Ok(tol(spot, 1e-12))),
                check(group, "schedule is unimodal with its peak at warmup", Ok((bad == 0, format!("{bad} failures")))),
            ],
            Err(e) => vec![check(group, "schedule", Err(e))],
        },
        _ => unreachable!("unknown group {group}"),
    }
}

/// Runs every group, or only `only`.
pub fn run(only: Option<&str>, seed: u64) -> Result<Vec<Check>> {
    let groups: Vec<&'static str> = match only {
        None => GROUPS.to_vec(),
        Some(g) => vec![*GROUPS
            .iter()
            .find(|x| **x == g)
            .ok_or_else(|| Error::invalid(format!("unknown check group {g:?}; expected one of {}", GROUPS.join(", "))))?],
    };
    Ok(groups.into_iter().flat_map(|g| run_group(g, seed)).collect())
}

/// TAP version 13 report.
pub fn tap(checks: &[Check]) -> String {
    let mut s = format!("TAP version 13\n1..{}\n", checks.len());
    for (i, c) in checks.iter().enumerate() {
        let status = if c.passed { "ok" } else { "not ok" };
        s.push_str(&format!("{status} {} - {}: {} # {}\n", i + 1, c.group, c.name, c.detail));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::set_lst_sign_fault;

    #[test]
    fn cheap_groups_pass() {
        for g in ["equivalence", "identities", "temperature", "beam", "cer", "kn", "schedule"] {
            for c in run(Some(g), 1).unwrap() {
                assert!(c.passed, "{}: {} ({})", c.group, c.name, c.detail);
            }
        }
        assert!(run(Some("nope"), 1).is_err());
    }

    #[test]
    fn injected_sign_fault_is_caught() {
        set_lst_sign_fault(true);
        let checks = run(Some("equivalence"), 2).unwrap();
        set_lst_sign_fault(false);
        assert!(!checks[0].passed);
        assert!(run(Some("equivalence"), 2).unwrap()[0].passed);
    }

    #[test]
    fn tap_layout() {
        let c = |passed| Check { group: "kn", name: "x".into(), passed, detail: "d".into() };
        assert_eq!(tap(&[c(true), c(false)]), "TAP version 13\n1..2\nok 1 - kn: x # d\nnot ok 2 - kn: x # d\n");
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(levenshtein(&[], &[4, 4]), 2);
        assert_eq!(levenshtein(&[1, 2], &[2, 1]), 2);
    }
}
