use std::path::{Path, PathBuf};

use lst_core::corpus::text::{read_sentences, read_transcripts, write_lines, write_string};
use lst_core::corpus::{PrepConfig, SelectionConfig, TokenSeq, Vocab};
use lst_core::decoding::{beam_search, evaluate, BeamOptions};
use lst_core::experiment::{synth_vocab, ExperimentConfig, SynthCorpus};
use lst_core::frontend::{
    compute_fbank, read_feature_cache, read_wav, splice_subsample, FbankConfig, FeatureMatrix, Utterance,
};
use lst_core::lm::{
    kn_train, perplexity, precompute_soft_labels, read_soft_labels, train_rnnlm, write_soft_labels, LmConfig,
    LmTrainConfig, RecurrentLM,
};
use lst_core::manifest::RunManifest;
use lst_core::seq2seq::{S2SConfig, S2SModel};
use lst_core::training::{
    train, write_curves, Checkpoint, CurveRow, LabelMode, Teacher, TrainConfig, TrainHooks,
};
use lst_core::verify;
use lst_core::{Error, Result};

use crate::data::DataDir;
use crate::{
    Command, DecodeArgs, EvalArgs, Fault, ModelArgs, PrepArgs, SearchArgs, SweepArgs, TrainLmArgs, TrainS2sArgs,
    TrainingArgs, VerifyArgs,
};

const LEFT_CONTEXT: usize = 3;
const SUBSAMPLE: usize = 3;

pub fn dispatch(command: Command, seed: u64, args: Vec<String>) -> Result<u8> {
    match command {
        Command::Prep(a) => prep(a, seed, args),
        Command::TrainLm(a) => train_lm(a, seed, args),
        Command::TrainS2s(a) => train_s2s(a, seed, args),
        Command::Decode(a) => decode(a, seed, args),
        Command::Eval(a) => eval(a, seed, args),
        Command::Verify(a) => run_verify(a, seed),
        Command::Sweep(a) => sweep(a, seed, args),
    }
}

fn manifest(command: &str, seed: u64, args: Vec<String>) -> RunManifest {
    let mut m = RunManifest::new(command, seed);
    m.args = args;
    m
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn split_kv(kv: &str) -> Result<(&str, &str)> {
    kv.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::InvalidArgument(format!("expected KEY=VALUE, got {kv:?}")))
}

fn encode_all<S: AsRef<str>>(vocab: &Vocab, text: &[S]) -> Vec<TokenSeq> {
    text.iter().map(|s| vocab.encode_chars(s.as_ref(), true)).collect()
}

// ---- prep ----

fn prep(a: PrepArgs, seed: u64, args: Vec<String>) -> Result<u8> {
    if a.dup == 0 {
        return Err(Error::InvalidArgument("--dup must be at least 1".into()));
    }
    let dir = DataDir::new(&a.out);
    dir.create()?;
    let mut m = manifest("prep", seed, args);

    let (train_text, external) = match &a.train {
        Some(train_path) => {
            if !a.overrides.is_empty() {
                return Err(Error::InvalidArgument("--set applies to the synthetic task only".into()));
            }
            let audio = a.audio.as_deref().expect("clap requires --audio with --train");
            let train_rows = read_transcripts(train_path)?;
            let texts: Vec<&str> = train_rows.iter().map(|(_, t)| t.as_str()).collect();
            let vocab = Vocab::build(&texts, a.min_count)?;
            vocab.write(&dir.path("vocab.txt"))?;
            let sets = [("train", Some(train_path.as_path())), ("dev", a.dev.as_deref()), ("test", a.test.as_deref())];
            for (set, path) in sets {
                let Some(path) = path else { continue };
                let rows = if set == "train" { train_rows.clone() } else { read_transcripts(path)? };
                for (id, _) in &rows {
                    let feats = load_audio(audio, id)?;
                    lst_core::frontend::write_feature_cache(&dir.feature_path(id), &feats)?;
                }
                write_transcripts_in(&dir, set, &rows)?;
                eprintln!("{set}: {} utterances", rows.len());
            }
            let external = match &a.external {
                Some(p) => read_sentences(p)?,
                None => Vec::new(),
            };
            (texts.iter().map(|s| s.to_string()).collect::<Vec<_>>(), external)
        }
        None => {
            let mut cfg = ExperimentConfig::default();
            for kv in &a.overrides {
                let (k, v) = split_kv(kv)?;
                if !k.starts_with("corpus.") {
                    return Err(Error::InvalidArgument(format!("prep only takes corpus.* keys, got {k:?}")));
                }
                cfg.set(k, v)?;
            }
            m.config = cfg.entries().into_iter().filter(|(k, _)| k.starts_with("corpus.")).collect();
            let vocab = synth_vocab();
            vocab.write(&dir.path("vocab.txt"))?;
            let corpus = cfg.corpus.generate(seed, &vocab)?;
            for (set, utts) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
                dir.write_set(set, utts, &vocab)?;
                eprintln!("{set}: {} utterances", utts.len());
            }
            write_lines(&dir.path("held_out.txt"), &corpus.held_out)?;
            m.artifacts.push(("held_out".into(), dir.path("held_out.txt")));
            let external = match &a.external {
                Some(p) => read_sentences(p)?,
                None => corpus.external,
            };
            (SynthCorpus::transcripts(&corpus.train, &vocab), external)
        }
    };

    write_lines(&dir.path("external.txt"), &external)?;
    let cfg = PrepConfig {
        top_n: a.top_n,
        max_len: a.max_len,
        dup: a.dup,
        seed,
        selection: SelectionConfig { seed, ..SelectionConfig::default() },
    };
    let prepared = lst_core::corpus::prepare_lm_text(&external, &train_text, &cfg);
    write_lines(&dir.path("lm_text.txt"), &prepared.sentences)?;
    let selection: String = prepared
        .selected
        .iter()
        .map(|s| format!("{:.6}\t{}\t{}\n", s.score, s.index, s.text))
        .collect();
    write_string(&dir.path("selection.tsv"), &selection)?;
    eprintln!(
        "teacher text: {} sentences ({} selected from {} external)",
        prepared.sentences.len(),
        prepared.selected.len(),
        external.len()
    );

    m.config.extend([
        ("prep.top_n".into(), a.top_n.to_string()),
        ("prep.max_len".into(), a.max_len.to_string()),
        ("prep.dup".into(), a.dup.to_string()),
    ]);
    for name in ["vocab.txt", "train.tsv", "dev.tsv", "test.tsv", "external.txt", "lm_text.txt", "selection.tsv"] {
        if dir.path(name).exists() {
            m.artifacts.push((name.trim_end_matches(".txt").trim_end_matches(".tsv").into(), dir.path(name)));
        }
    }
    m.write(&dir.path("prep.manifest.txt"))?;
    Ok(0)
}

fn write_transcripts_in(dir: &DataDir, set: &str, rows: &[(String, String)]) -> Result<()> {
    lst_core::corpus::text::write_transcripts(&dir.path(&format!("{set}.tsv")), rows)
}

/// `{id}.wav` through the filterbank, or raw `{id}.lstf` filterbanks; then spliced.
fn load_audio(audio: &Path, id: &str) -> Result<FeatureMatrix> {
    let wav = audio.join(format!("{id}.wav"));
    let fbank = if wav.exists() {
        compute_fbank(&read_wav(&wav)?, &FbankConfig::default())?
    } else {
        read_feature_cache(&audio.join(format!("{id}.lstf")))?
    };
    Ok(splice_subsample(&fbank, LEFT_CONTEXT, SUBSAMPLE))
}

// ---- train-lm ----

fn train_lm(a: TrainLmArgs, seed: u64, args: Vec<String>) -> Result<u8> {
    let dir = DataDir::new(&a.data);
    let vocab = dir.vocab()?;
    let text_path = a.text.clone().unwrap_or_else(|| dir.path("lm_text.txt"));
    let corpus = encode_all(&vocab, &read_sentences(&text_path)?);
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no sentences", text_path.display())));
    }
    let cfg = LmTrainConfig {
        model: LmConfig { vocab_size: vocab.len(), emb_dim: a.emb_dim, hidden: a.hidden, layers: a.layers },
        epochs: a.epochs,
        lr: a.lr,
        momentum: a.momentum,
        clip: (a.clip > 0.0).then_some(a.clip),
        batch_size: a.batch_size,
        seed,
    };
    let (lm, curve) = train_rnnlm(&corpus, &cfg)?;
    lm.save(&a.out)?;
    let curves = a.curves.clone().unwrap_or_else(|| with_suffix(&a.out, ".curves.csv"));
    let csv: String = std::iter::once("epoch,train_loss\n".to_string())
        .chain(curve.epoch_loss.iter().enumerate().map(|(i, l)| format!("{},{l}\n", i + 1)))
        .collect();
    write_string(&curves, &csv)?;

    let mut m = manifest("train-lm", seed, args);
    m.config = vec![
        ("emb_dim".into(), a.emb_dim.to_string()),
        ("hidden".into(), a.hidden.to_string()),
        ("layers".into(), a.layers.to_string()),
        ("epochs".into(), a.epochs.to_string()),
        ("lr".into(), a.lr.to_string()),
        ("momentum".into(), a.momentum.to_string()),
        ("clip".into(), a.clip.to_string()),
        ("batch_size".into(), a.batch_size.to_string()),
    ];
    m.artifacts.push(("checkpoint".into(), a.out.clone()));
    m.artifacts.push(("curves".into(), curves));

    let held_out = a.held_out.clone().or_else(|| Some(dir.path("held_out.txt")).filter(|p| p.exists()));
    if let Some(p) = held_out {
        let held = encode_all(&vocab, &read_sentences(&p)?);
        if !held.is_empty() {
            let kn = kn_train(&corpus, 3, vocab.len())?;
            let (rnn_ppl, kn_ppl) = (perplexity(&lm, &held)?, perplexity(&kn, &held)?);
            println!("held-out perplexity: rnn {rnn_ppl:.3}, 3-gram {kn_ppl:.3}");
            m.config.push(("ppl.rnn".into(), format!("{rnn_ppl:.6}")));
            m.config.push(("ppl.kn3".into(), format!("{kn_ppl:.6}")));
        }
    }

    if let Some(cache) = &a.soft_labels {
        let train: Vec<TokenSeq> = dir.transcripts("train")?.iter().map(|(_, t)| vocab.encode_chars(t, true)).collect();
        let labels = precompute_soft_labels(&lm, &train, a.temperature, a.top_m)?;
        write_soft_labels(cache, vocab.len(), &labels)?;
        m.config.push(("soft_labels.temperature".into(), a.temperature.to_string()));
        m.artifacts.push(("soft_labels".into(), cache.clone()));
    }
    m.write(&with_suffix(&a.out, ".manifest.txt"))?;
    Ok(0)
}

// ---- train-s2s ----

fn training_config(t: &TrainingArgs, seed: u64) -> Result<TrainConfig> {
    let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
    if let Some(p) = &t.config {
        cfg.apply_file(p)?;
    }
    for kv in &t.overrides {
        let (k, v) = split_kv(kv)?;
        cfg.set(k, v)?;
    }
    if let Some(mode) = t.label_mode {
        cfg.label_mode = mode;
    }
    if let Some(l) = t.lambda {
        cfg.lambda = l;
    }
    if let Some(temp) = t.temperature {
        cfg.temperature = temp;
    }
    if let Some(e) = t.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_config(m: &ModelArgs, input_dim: usize, vocab_size: usize) -> Result<S2SConfig> {
    let cfg = S2SConfig {
        input_dim,
        d_model: m.d_model,
        n_heads: m.heads,
        n_enc_blocks: m.enc_blocks,
        n_dec_blocks: m.dec_blocks,
        ff_dim: m.ff_dim,
        vocab_size,
        dropout: m.dropout,
        pre_norm: !m.post_norm,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn model_entries(c: &S2SConfig) -> Vec<(String, String)> {
    vec![
        ("model.d_model".into(), c.d_model.to_string()),
        ("model.heads".into(), c.n_heads.to_string()),
        ("model.enc_blocks".into(), c.n_enc_blocks.to_string()),
        ("model.dec_blocks".into(), c.n_dec_blocks.to_string()),
        ("model.ff_dim".into(), c.ff_dim.to_string()),
        ("model.dropout".into(), c.dropout.to_string()),
        ("model.pre_norm".into(), c.pre_norm.to_string()),
    ]
}

struct Progress;

impl TrainHooks for Progress {
    fn on_epoch(&mut self, row: &CurveRow) {
        eprintln!("epoch {:>3}  train loss {:.4}  dev ce {:.4}", row.epoch, row.train_loss, row.dev_ce);
    }
}

struct Sets {
    vocab: Vocab,
    train: Vec<Utterance>,
    dev: Vec<Utterance>,
}

fn load_training_sets(data: &Path) -> Result<Sets> {
    let dir = DataDir::new(data);
    let vocab = dir.vocab()?;
    let train = dir.load_set("train", &vocab)?;
    let dev = dir.load_set("dev", &vocab)?;
    Ok(Sets { vocab, train, dev })
}

fn input_dim(set: &[Utterance]) -> Result<usize> {
    set.first()
        .map(|u| u.features.dim())
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))
}

enum TeacherSource {
    None,
    Model(RecurrentLM),
    Cache(Vec<Vec<lst_core::numerics::LabelDistribution>>),
}

impl TeacherSource {
    fn load(t: &TrainingArgs, k: usize) -> Result<Self> {
        if let Some(p) = &t.teacher {
            let lm = RecurrentLM::load(p)?;
            if lm.vocab_size() != k {
                return Err(Error::InvalidArgument("teacher and data vocabularies differ".into()));
            }
            return Ok(TeacherSource::Model(lm));
        }
        if let Some(p) = &t.soft_labels {
            let (ck, labels) = read_soft_labels(p)?;
            if ck != k {
                return Err(Error::InvalidArgument(format!("soft labels over {ck} tokens, vocabulary has {k}")));
            }
            return Ok(TeacherSource::Cache(labels));
        }
        Ok(TeacherSource::None)
    }

    fn teacher(&self) -> Teacher<'_> {
        match self {
            TeacherSource::None => Teacher::None,
            TeacherSource::Model(lm) => Teacher::Model(lm),
            TeacherSource::Cache(c) => Teacher::Precomputed(c),
        }
    }

    fn model(&self) -> Option<&RecurrentLM> {
        match self {
            TeacherSource::Model(lm) => Some(lm),
            _ => None,
        }
    }
}

fn train_s2s(a: TrainS2sArgs, seed: u64, args: Vec<String>) -> Result<u8> {
    let cfg = training_config(&a.training, seed)?;
    let sets = load_training_sets(&a.data)?;
    let k = sets.vocab.len();
    let source = TeacherSource::load(&a.training, k)?;
    if cfg.label_mode == LabelMode::Lst && matches!(source, TeacherSource::None) {
        return Err(Error::InvalidArgument("lst mode needs --teacher or --soft-labels".into()));
    }
    let model_cfg = model_config(&a.training.model, input_dim(&sets.train)?, k)?;
    let model = S2SModel::new(model_cfg, cfg.seed)?;
    let outcome = train(model, &sets.train, &sets.dev, &cfg, source.teacher(), &mut Progress)?;
    outcome.best.save(&a.out)?;
    let curves = a.curves.clone().unwrap_or_else(|| with_suffix(&a.out, ".curves.csv"));
    write_curves(&curves, &outcome.curves)?;
    println!("best epoch {} dev ce {:.4}", outcome.best.epoch, outcome.best.dev_ce);

    let mut m = manifest("train-s2s", seed, args);
    m.config = cfg.entries().into_iter().map(|(k, v)| (format!("train.{k}"), v)).collect();
    m.config.extend(model_entries(&model_cfg));
    m.artifacts.push(("checkpoint".into(), a.out.clone()));
    m.artifacts.push(("curves".into(), curves));
    m.write(&with_suffix(&a.out, ".manifest.txt"))?;
    Ok(0)
}

// ---- decode / eval ----

fn fusion_lm(lm: Option<&Path>, weights: &[f64], k: usize) -> Result<Option<RecurrentLM>> {
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("fusion weights must be non-negative".into()));
    }
    let lm = lm.map(RecurrentLM::load).transpose()?;
    if lm.is_none() && weights.iter().any(|&w| w > 0.0) {
        return Err(Error::InvalidArgument("a positive fusion weight needs --lm".into()));
    }
    if let Some(lm) = &lm {
        if lm.vocab_size() != k {
            return Err(Error::InvalidArgument("language model and data vocabularies differ".into()));
        }
    }
    Ok(lm)
}

fn output_prefix(out: &Path, weights: &[f64], w: f64) -> PathBuf {
    if weights.len() > 1 {
        with_suffix(out, &format!(".w{w}"))
    } else {
        out.to_path_buf()
    }
}

struct Search {
    vocab: Vocab,
    set: Vec<Utterance>,
    model: S2SModel,
    lm: Option<RecurrentLM>,
}

fn load_search(s: &SearchArgs) -> Result<Search> {
    let dir = DataDir::new(&s.data);
    let vocab = dir.vocab()?;
    let set = dir.load_set(&s.split, &vocab)?;
    let model = Checkpoint::load(&s.model)?.model;
    if model.config().vocab_size != vocab.len() {
        return Err(Error::InvalidArgument("model and data vocabularies differ".into()));
    }
    let lm = fusion_lm(s.lm.as_deref(), &s.fusion_weight, vocab.len())?;
    Ok(Search { vocab, set, model, lm })
}

fn options(s: &SearchArgs, w: f64) -> BeamOptions {
    BeamOptions { beam: s.beam, max_len: s.max_len, fusion_weight: w, length_norm: s.length_norm }
}

fn search_manifest(command: &str, s: &SearchArgs, seed: u64, args: Vec<String>) -> RunManifest {
    let mut m = manifest(command, seed, args);
    m.config = vec![
        ("split".into(), s.split.clone()),
        ("beam".into(), s.beam.to_string()),
        ("max_len".into(), s.max_len.to_string()),
        ("length_norm".into(), s.length_norm.to_string()),
    ];
    m
}

fn decode(a: DecodeArgs, seed: u64, args: Vec<String>) -> Result<u8> {
    let s = &a.search;
    let run = load_search(s)?;
    let mut m = search_manifest("decode", s, seed, args);
    for &w in &s.fusion_weight {
        let opts = options(s, w);
        let mut out = String::new();
        for u in &run.set {
            let hyp = match (&run.lm, w > 0.0) {
                (Some(lm), true) => beam_search(&run.model, &u.features, &opts, Some(lm)),
                _ => beam_search::<_, RecurrentLM>(&run.model, &u.features, &opts, None),
            }
            .map_err(|e| Error::EvaluationFailure(format!("utterance {}: {e}", u.id)))?;
            out.push_str(&format!("{}\t{}\n", u.id, run.vocab.decode(&hyp.output())));
        }
        let path = with_suffix(&output_prefix(&s.out, &s.fusion_weight, w), ".decode.tsv");
        write_string(&path, &out)?;
        m.artifacts.push((format!("decode.w{w}"), path));
    }
    m.write(&with_suffix(&s.out, ".manifest.txt"))?;
    Ok(0)
}

fn eval(a: EvalArgs, seed: u64, args: Vec<String>) -> Result<u8> {
    let s = &a.search;
    let run = load_search(s)?;
    let mut m = search_manifest("eval", s, seed, args);
    let mut failed = false;
    for &w in &s.fusion_weight {
        let opts = options(s, w);
        let report = match (&run.lm, w > 0.0) {
            (Some(lm), true) => evaluate(&run.model, &run.set, &opts, Some(lm)),
            _ => evaluate::<_, RecurrentLM>(&run.model, &run.set, &opts, None),
        }?;
        let prefix = output_prefix(&s.out, &s.fusion_weight, w);
        let (decode_path, report_path) = (with_suffix(&prefix, ".decode.tsv"), with_suffix(&prefix, ".report.tsv"));
        report.write(&decode_path, &report_path, &run.vocab)?;
        println!("fusion weight {w}: CER {:.2}% over {} utterances", report.cer, report.rows.len());
        m.config.push((format!("cer.w{w}"), format!("{:.4}", report.cer)));
        m.artifacts.push((format!("decode.w{w}"), decode_path));
        m.artifacts.push((format!("report.w{w}"), report_path));
        if a.max_cer.is_some_and(|max| report.cer > max) {
            failed = true;
        }
    }
    m.write(&with_suffix(&s.out, ".manifest.txt"))?;
    if failed {
        eprintln!("CER above --max-cer {}", a.max_cer.unwrap());
        return Ok(1);
    }
    Ok(0)
}

// ---- verify ----

fn run_verify(a: VerifyArgs, seed: u64) -> Result<u8> {
    if a.inject_fault == Some(Fault::LstSign) {
        lst_core::training::set_lst_sign_fault(true);
    }
    let checks = verify::run(a.only.as_deref(), seed)?;
    print!("{}", verify::tap(&checks));
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
}

// ---- sweep ----

struct GridPoint {
    mode: LabelMode,
    lambda: Option<f64>,
    temperature: Option<f64>,
}

impl GridPoint {
    fn name(&self) -> String {
        let mut s = self.mode.to_string();
        if let Some(l) = self.lambda {
            s.push_str(&format!("_l{l}"));
        }
        if let Some(t) = self.temperature {
            s.push_str(&format!("_t{t}"));
        }
        s
    }
}

fn grid(a: &SweepArgs) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &mode in &a.modes {
        let lambdas: Vec<Option<f64>> = match mode {
            LabelMode::Hard => vec![None],
            _ => a.lambdas.iter().map(|&l| Some(l)).collect(),
        };
        let temps: Vec<Option<f64>> = match mode {
            LabelMode::Lst => a.temperatures.iter().map(|&t| Some(t)).collect(),
            _ => vec![None],
        };
        for &lambda in &lambdas {
            for &temperature in &temps {
                points.push(GridPoint { mode, lambda, temperature });
            }
        }
    }
    points
}

fn sweep(a: SweepArgs, seed: u64, args: Vec<String>) -> Result<u8> {
    if a.training.soft_labels.is_some() {
        return Err(Error::InvalidArgument("sweep computes soft labels per temperature; pass --teacher".into()));
    }
    let base = training_config(&a.training, seed)?;
    let sets = load_training_sets(&a.data)?;
    let test = DataDir::new(&a.data).load_set("test", &sets.vocab)?;
    let k = sets.vocab.len();
    let source = TeacherSource::load(&a.training, k)?;
    if a.modes.contains(&LabelMode::Lst) && source.model().is_none() {
        return Err(Error::InvalidArgument("lst in --modes needs --teacher".into()));
    }
    let lm = source.model();
    if lm.is_none() && a.fusion_weights.iter().any(|&w| w > 0.0) {
        return Err(Error::InvalidArgument("a positive fusion weight needs --teacher".into()));
    }
    let model_cfg = model_config(&a.training.model, input_dim(&sets.train)?, k)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;

    let mut m = manifest("sweep", seed, args);
    m.config = base.entries().into_iter().map(|(k, v)| (format!("train.{k}"), v)).collect();
    m.config.extend(model_entries(&model_cfg));
    let mut summary = String::from("mode\tlambda\ttemperature\tfusion_weight\tbest_epoch\tdev_ce\tcer\n");
    for point in grid(&a) {
        let name = point.name();
        let cfg = TrainConfig {
            label_mode: point.mode,
            lambda: point.lambda.unwrap_or(base.lambda),
            temperature: point.temperature.unwrap_or(base.temperature),
            ..base.clone()
        };
        eprintln!("== {name}");
        let model = S2SModel::new(model_cfg, base.seed)?;
        let teacher = if point.mode == LabelMode::Lst { source.teacher() } else { Teacher::None };
        let outcome = train(model, &sets.train, &sets.dev, &cfg, teacher, &mut Progress)?;
        let ckpt = a.out.join(format!("{name}.ckpt"));
        outcome.best.save(&ckpt)?;
        write_curves(&a.out.join(format!("{name}.curves.csv")), &outcome.curves)?;
        m.artifacts.push((name.clone(), ckpt));
        for &w in &a.fusion_weights {
            let opts = BeamOptions { beam: a.beam, max_len: a.max_len, fusion_weight: w, length_norm: false };
            let report = match (lm, w > 0.0) {
                (Some(lm), true) => evaluate(&outcome.best.model, &test, &opts, Some(lm)),
                _ => evaluate::<_, RecurrentLM>(&outcome.best.model, &test, &opts, None),
            }?;
            let prefix = a.out.join(format!("{name}.w{w}"));
            report.write(&with_suffix(&prefix, ".decode.tsv"), &with_suffix(&prefix, ".report.tsv"), &sets.vocab)?;
            let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
            let row = format!(
                "{}\t{}\t{}\t{w}\t{}\t{:.4}\t{:.2}\n",
                point.mode,
                show(point.lambda),
                show(point.temperature),
                outcome.best.epoch,
                outcome.best.dev_ce,
                report.cer
            );
            print!("{row}");
            summary.push_str(&row);
        }
    }
    let summary_path = a.out.join("summary.tsv");
    write_string(&summary_path, &summary)?;
    m.artifacts.push(("summary".into(), summary_path));
    m.write(&a.out.join("manifest.txt"))?;
    Ok(0)
}
