//! The synthetic end-to-end setup shared by the command line defaults and the
//! trend checks: corpus generation, text preparation, teacher training,
//! student runs under any label mode, and evaluation with or without fusion.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::text::{write_lines, write_string};
use crate::corpus::{prepare_lm_text, select_scored, PrepConfig, PreparedText, TokenSeq, Vocab};
use crate::decoding::{evaluate, BeamOptions, EvalReport};
use crate::error::{Error, Result};
use crate::frontend::{synth_text, synth_utterances, Domain, SynthTask, Utterance};
use crate::lm::{kn_train, perplexity, train_rnnlm, LmConfig, LmCurve, LmTrainConfig, RecurrentLM};
use crate::manifest::RunManifest;
use crate::seq2seq::{S2SConfig, S2SModel};
use crate::training::{train, write_curves, LabelMode, NoHooks, Teacher, TrainConfig, TrainOutcome};

/// Character inventory of the synthetic grammars.
pub const SYNTH_ALPHABET: &str = "abcdefghijklmno";

pub fn synth_vocab() -> Vocab {
    Vocab::build(&[SYNTH_ALPHABET], 1).expect("synthetic alphabet is non-empty")
}

/// Independent stream for each `(seed, tag)` pair.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusConfig {
    pub task: SynthTask,
    pub noise_std: f64,
    pub len_range: (usize, usize),
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// In-domain and out-of-domain sentences in the external text pool.
    pub n_external_in: usize,
    pub n_external_out: usize,
    /// In-domain sentences held out for perplexity.
    pub n_held_out: usize,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            task: SynthTask { confusion_distance: 0.3, ..SynthTask::default() },
            noise_std: 0.5,
            len_range: (4, 16),
            n_train: 500,
            n_dev: 60,
            n_test: 200,
            n_external_in: 2000,
            n_external_out: 2000,
            n_held_out: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    /// Shuffled mix of both domains.
    pub external: Vec<String>,
    pub held_out: Vec<String>,
}

impl SynthCorpus {
    pub fn transcripts(set: &[Utterance], vocab: &Vocab) -> Vec<String> {
        set.iter().map(|u| vocab.decode(&u.tokens)).collect()
    }
}

impl SynthCorpusConfig {
    pub fn generate(&self, seed: u64, vocab: &Vocab) -> Result<SynthCorpus> {
        let utts = |prefix: &str, tag: u64, n: usize| {
            synth_utterances(&self.task, prefix, sub_seed(seed, tag), vocab, n, self.len_range, self.noise_std)
        };
        let mut external = synth_text(Domain::InDomain, sub_seed(seed, 4), self.n_external_in, (4, 30))?;
        external.extend(synth_text(Domain::OutOfDomain, sub_seed(seed, 5), self.n_external_out, (4, 30))?);
        external.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 6)));
        Ok(SynthCorpus {
            train: utts("train", 1, self.n_train)?,
            dev: utts("dev", 2, self.n_dev)?,
            test: utts("test", 3, self.n_test)?,
            external,
            held_out: synth_text(Domain::InDomain, sub_seed(seed, 7), self.n_held_out, self.len_range)?,
        })
    }
}

/// Everything one synthetic run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: SynthCorpusConfig,
    pub prep: PrepConfig,
    pub teacher: LmTrainConfig,
    /// Student shape; `input_dim` and `vocab_size` are filled in from the data.
    pub student: S2SConfig,
    pub train: TrainConfig,
    pub decode: BeamOptions,
    /// LM weight of the fused evaluation.
    pub fusion_weight: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let vocab = synth_vocab();
        ExperimentConfig {
            corpus: SynthCorpusConfig::default(),
            prep: PrepConfig { top_n: 2000, max_len: 50, dup: 1, ..PrepConfig::default() },
            teacher: LmTrainConfig { batch_size: 16, ..LmTrainConfig::new(LmConfig::desk(vocab.len())) },
            student: S2SConfig::desk(32, vocab.len()),
            train: TrainConfig { epochs: 50, batch_frames: 100, ..TrainConfig::default() },
            decode: BeamOptions { beam: 4, ..BeamOptions::default() },
            fusion_weight: 0.1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value for {key}: {value:?}")))
}

impl ExperimentConfig {
    /// Sets one `section.key`; `train.*` keys are those of [`TrainConfig`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let c = &mut self.corpus;
        match key {
            "corpus.noise_std" => c.noise_std = parse(key, value)?,
            "corpus.confusion_distance" => c.task.confusion_distance = parse(key, value)?,
            "corpus.frames_per_char" => c.task.frames_per_char = parse(key, value)?,
            "corpus.min_len" => c.len_range.0 = parse(key, value)?,
            "corpus.max_len" => c.len_range.1 = parse(key, value)?,
            "corpus.n_train" => c.n_train = parse(key, value)?,
            "corpus.n_dev" => c.n_dev = parse(key, value)?,
            "corpus.n_test" => c.n_test = parse(key, value)?,
            "corpus.n_external_in" => c.n_external_in = parse(key, value)?,
            "corpus.n_external_out" => c.n_external_out = parse(key, value)?,
            "corpus.n_held_out" => c.n_held_out = parse(key, value)?,
            "prep.top_n" => self.prep.top_n = parse(key, value)?,
            "prep.max_len" => self.prep.max_len = parse(key, value)?,
            "prep.dup" => self.prep.dup = parse(key, value)?,
            "teacher.emb_dim" => self.teacher.model.emb_dim = parse(key, value)?,
            "teacher.hidden" => self.teacher.model.hidden = parse(key, value)?,
            "teacher.layers" => self.teacher.model.layers = parse(key, value)?,
            "teacher.epochs" => self.teacher.epochs = parse(key, value)?,
            "teacher.lr" => self.teacher.lr = parse(key, value)?,
            "teacher.batch_size" => self.teacher.batch_size = parse(key, value)?,
            "student.d_model" => self.student.d_model = parse(key, value)?,
            "student.n_heads" => self.student.n_heads = parse(key, value)?,
            "student.n_enc_blocks" => self.student.n_enc_blocks = parse(key, value)?,
            "student.n_dec_blocks" => self.student.n_dec_blocks = parse(key, value)?,
            "student.ff_dim" => self.student.ff_dim = parse(key, value)?,
            "student.dropout" => self.student.dropout = parse(key, value)?,
            "student.pre_norm" => self.student.pre_norm = parse(key, value)?,
            "decode.beam" => self.decode.beam = parse(key, value)?,
            "decode.max_len" => self.decode.max_len = parse(key, value)?,
            "decode.length_norm" => self.decode.length_norm = parse(key, value)?,
            "decode.fusion_weight" => self.fusion_weight = parse(key, value)?,
            other => match other.strip_prefix("train.") {
                Some(k) => self.train.set(k, value)?,
                None => return Err(Error::invalid(format!("unknown experiment key {other:?}"))),
            },
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let c = &self.corpus;
        let (t, s) = (&self.teacher, &self.student);
        let mut out: Vec<(String, String)> = [
            ("corpus.noise_std", c.noise_std.to_string()),
            ("corpus.confusion_distance", c.task.confusion_distance.to_string()),
            ("corpus.frames_per_char", c.task.frames_per_char.to_string()),
            ("corpus.min_len", c.len_range.0.to_string()),
            ("corpus.max_len", c.len_range.1.to_string()),
            ("corpus.n_train", c.n_train.to_string()),
            ("corpus.n_dev", c.n_dev.to_string()),
            ("corpus.n_test", c.n_test.to_string()),
            ("corpus.n_external_in", c.n_external_in.to_string()),
            ("corpus.n_external_out", c.n_external_out.to_string()),
            ("corpus.n_held_out", c.n_held_out.to_string()),
            ("prep.top_n", self.prep.top_n.to_string()),
            ("prep.max_len", self.prep.max_len.to_string()),
            ("prep.dup", self.prep.dup.to_string()),
            ("teacher.emb_dim", t.model.emb_dim.to_string()),
            ("teacher.hidden", t.model.hidden.to_string()),
            ("teacher.layers", t.model.layers.to_string()),
            ("teacher.epochs", t.epochs.to_string()),
            ("teacher.lr", t.lr.to_string()),
            ("teacher.batch_size", t.batch_size.to_string()),
            ("student.d_model", s.d_model.to_string()),
            ("student.n_heads", s.n_heads.to_string()),
            ("student.n_enc_blocks", s.n_enc_blocks.to_string()),
            ("student.n_dec_blocks", s.n_dec_blocks.to_string()),
            ("student.ff_dim", s.ff_dim.to_string()),
            ("student.dropout", s.dropout.to_string()),
            ("student.pre_norm", s.pre_norm.to_string()),
            ("decode.beam", self.decode.beam.to_string()),
            ("decode.max_len", self.decode.max_len.to_string()),
            ("decode.length_norm", self.decode.length_norm.to_string()),
            ("decode.fusion_weight", self.fusion_weight.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        out.extend(self.train.entries().into_iter().map(|(k, v)| (format!("train.{k}"), v)));
        out
    }
}

/// Runs selection, filtering and mixing over the external pool, with the
/// training transcripts as the in-domain side.
pub fn prepare_teacher_text(corpus: &SynthCorpus, vocab: &Vocab, prep: &PrepConfig) -> PreparedText {
    prepare_lm_text(&corpus.external, &SynthCorpus::transcripts(&corpus.train, vocab), prep)
}

pub fn encode_text(sentences: &[String], vocab: &Vocab) -> Vec<TokenSeq> {
    sentences.iter().map(|s| vocab.encode_chars(s, true)).collect()
}

pub fn train_teacher(text: &PreparedText, vocab: &Vocab, cfg: &LmTrainConfig, seed: u64) -> Result<(RecurrentLM, LmCurve)> {
    let cfg = LmTrainConfig { seed: sub_seed(seed, 20), ..cfg.clone() };
    train_rnnlm(&encode_text(&text.sentences, vocab), &cfg)
}

/// Held-out in-domain perplexities of the three language models compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmTrend {
    /// Recurrent LM on the prepared (selected, mixed) text.
    pub rnn_matched: f64,
    /// 3-gram on the same text.
    pub kn_matched: f64,
    /// 3-gram on as many of the lowest-ranked external sentences.
    pub kn_mismatched: f64,
}

pub fn lm_trend(seed: u64, cfg: &ExperimentConfig) -> Result<LmTrend> {
    let vocab = synth_vocab();
    let corpus = cfg.corpus.generate(seed, &vocab)?;
    let prepared = prepare_teacher_text(&corpus, &vocab, &cfg.prep);
    let transcripts = SynthCorpus::transcripts(&corpus.train, &vocab);
    let ranked = select_scored(&corpus.external, &transcripts, corpus.external.len(), &cfg.prep.selection);
    let n_selected = prepared.selected.len();
    let mismatched: Vec<String> = ranked[n_selected..].iter().take(n_selected).map(|s| s.text.clone()).collect();
    if mismatched.is_empty() {
        return Err(Error::invalid("selection kept the whole external pool; nothing is left as mismatched text"));
    }

    let k = vocab.len();
    let matched = encode_text(&prepared.sentences, &vocab);
    let held_out = encode_text(&corpus.held_out, &vocab);
    let (rnn, _) = train_teacher(&prepared, &vocab, &cfg.teacher, seed)?;
    Ok(LmTrend {
        rnn_matched: perplexity(&rnn, &held_out)?,
        kn_matched: perplexity(&kn_train(&matched, 3, k)?, &held_out)?,
        kn_mismatched: perplexity(&kn_train(&encode_text(&mismatched, &vocab), 3, k)?, &held_out)?,
    })
}

pub fn student_config(cfg: &ExperimentConfig, corpus: &SynthCorpus, vocab: &Vocab) -> Result<S2SConfig> {
    let first = corpus.train.first().ok_or_else(|| Error::invalid("training set is empty"))?;
    Ok(S2SConfig { input_dim: first.features.dim(), vocab_size: vocab.len(), ..cfg.student })
}

/// One student trained under `mode` from the shared initialization of `seed`.
pub fn train_student(
    mode: LabelMode,
    corpus: &SynthCorpus,
    vocab: &Vocab,
    teacher: &RecurrentLM,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let model = S2SModel::new(student_config(cfg, corpus, vocab)?, sub_seed(seed, 30))?;
    let train_cfg = TrainConfig { label_mode: mode, seed: sub_seed(seed, 31), ..cfg.train.clone() };
    train(model, &corpus.train, &corpus.dev, &train_cfg, Teacher::Model(teacher), &mut NoHooks)
}

pub fn evaluate_student(
    model: &S2SModel,
    test: &[Utterance],
    opts: &BeamOptions,
    fusion: Option<(&RecurrentLM, f64)>,
) -> Result<EvalReport> {
    match fusion {
        Some((lm, w)) => evaluate(model, test, &BeamOptions { fusion_weight: w, ..*opts }, Some(lm)),
        None => evaluate::<_, RecurrentLM>(model, test, &BeamOptions { fusion_weight: 0.0, ..*opts }, None),
    }
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub outcome: TrainOutcome,
    pub report: EvalReport,
}

/// Baseline, LST, and LST with shallow fusion for one seed.
#[derive(Debug, Clone)]
pub struct AsrTrend {
    pub baseline: StudentRun,
    pub lst: StudentRun,
    pub lst_fused: EvalReport,
}

/// Runs the comparison; with `out`, writes checkpoints, curves, decode and
/// report files plus a manifest that [`replay_asr_trend`] accepts.
pub fn asr_trend(seed: u64, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<AsrTrend> {
    let vocab = synth_vocab();
    let corpus = cfg.corpus.generate(seed, &vocab)?;
    let prepared = prepare_teacher_text(&corpus, &vocab, &cfg.prep);
    let (teacher, _) = train_teacher(&prepared, &vocab, &cfg.teacher, seed)?;
    let run = |mode| -> Result<StudentRun> {
        let outcome = train_student(mode, &corpus, &vocab, &teacher, cfg, seed)?;
        let report = evaluate_student(&outcome.best.model, &corpus.test, &cfg.decode, None)?;
        Ok(StudentRun { outcome, report })
    };
    let baseline = run(LabelMode::Hard)?;
    let lst = run(LabelMode::Lst)?;
    let lst_fused = evaluate_student(&lst.outcome.best.model, &corpus.test, &cfg.decode, Some((&teacher, cfg.fusion_weight)))?;
    let result = AsrTrend { baseline, lst, lst_fused };
    if let Some(dir) = out {
        write_asr_artifacts(dir, seed, cfg, &vocab, &teacher, &result)?;
    }
    Ok(result)
}

fn write_asr_artifacts(
    dir: &Path,
    seed: u64,
    cfg: &ExperimentConfig,
    vocab: &Vocab,
    teacher: &RecurrentLM,
    r: &AsrTrend,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = RunManifest::new("asr-trend", seed);
    manifest.config = cfg.entries();
    let mut record = |name: &str, file: &str| -> PathBuf {
        let p = dir.join(file);
        manifest.artifacts.push((name.to_string(), p.clone()));
        p
    };
    vocab.write(&record("vocab", "vocab.txt"))?;
    teacher.save(&record("teacher", "teacher.ckpt"))?;
    for (name, run) in [("baseline", &r.baseline), ("lst", &r.lst)] {
        run.outcome.best.save(&record(&format!("{name}.checkpoint"), &format!("{name}.ckpt")))?;
        write_curves(&record(&format!("{name}.curves"), &format!("{name}.curves.csv")), &run.outcome.curves)?;
        let decode = record(&format!("{name}.decode"), &format!("{name}.decode.tsv"));
        run.report.write(&decode, &record(&format!("{name}.report"), &format!("{name}.report.tsv")), vocab)?;
    }
    let decode = record("lst_fused.decode", "lst_fused.decode.tsv");
    r.lst_fused.write(&decode, &record("lst_fused.report", "lst_fused.report.tsv"), vocab)?;
    let summary = [
        "system\tcer".to_string(),
        format!("baseline\t{:.4}", r.baseline.report.cer),
        format!("lst\t{:.4}", r.lst.report.cer),
        format!("lst_fused\t{:.4}", r.lst_fused.cer),
    ];
    write_lines(&record("summary", "summary.tsv"), &summary)?;
    let path = dir.join("manifest.txt");
    write_string(&path, &manifest.to_text())
}

/// Re-runs a recorded comparison into `out` using the manifest's seed and config.
pub fn replay_asr_trend(manifest: &RunManifest, out: &Path) -> Result<AsrTrend> {
    if manifest.command != "asr-trend" {
        return Err(Error::invalid(format!("manifest records {:?}, not an asr-trend run", manifest.command)));
    }
    let mut cfg = ExperimentConfig::default();
    for (k, v) in &manifest.config {
        cfg.set(k, v)?;
    }
    asr_trend(manifest.seed, &cfg, Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_entries_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("corpus.noise_std", "0.25").unwrap();
        cfg.set("train.lambda", "0.7").unwrap();
        cfg.set("student.pre_norm", "false").unwrap();
        let mut back = ExperimentConfig::default();
        for (k, v) in cfg.entries() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
        assert!(cfg.set("nope", "1").is_err());
    }

    #[test]
    fn corpus_is_deterministic_and_mixed() {
        let vocab = synth_vocab();
        let cfg = SynthCorpusConfig {
            n_train: 5,
            n_dev: 2,
            n_test: 2,
            n_external_in: 20,
            n_external_out: 20,
            n_held_out: 3,
            ..SynthCorpusConfig::default()
        };
        let a = cfg.generate(3, &vocab).unwrap();
        let b = cfg.generate(3, &vocab).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.external, b.external);
        assert_eq!(a.external.len(), 40);
        assert_ne!(a.train[0].tokens, cfg.generate(4, &vocab).unwrap().train[0].tokens);
    }
}
