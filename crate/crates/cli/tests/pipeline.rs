use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--set",
    "corpus.n_train=30",
    "--set",
    "corpus.n_dev=6",
    "--set",
    "corpus.n_test=6",
    "--set",
    "corpus.n_external_in=80",
    "--set",
    "corpus.n_external_out=80",
    "--set",
    "corpus.n_held_out=20",
];

fn lst(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lst"))
        .current_dir(dir)
        .env_remove("LST_SEED")
        .args(args)
        .output()
        .expect("run lst")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = lst(dir, args);
    assert_eq!(code(&out), 0, "lst {args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn prep_tiny(dir: &Path, extra: &[&str]) {
    let mut args = vec!["prep", "--out", "d", "--top-n", "40", "--seed", "5"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    ok(dir, &args);
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn prep_train_decode_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prep_tiny(dir, &[]);
    for name in ["vocab.txt", "train.tsv", "dev.tsv", "test.tsv", "lm_text.txt", "selection.tsv", "prep.manifest.txt"] {
        assert!(dir.join("d").join(name).exists(), "{name}");
    }
    assert_eq!(lines(&dir.join("d/train.tsv")).len(), 30);

    let out = ok(dir, &["train-lm", "--data", "d", "--out", "lm.ckpt", "--epochs", "1", "--soft-labels", "soft.bin"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("held-out perplexity"));
    assert_eq!(lines(&dir.join("lm.ckpt.curves.csv")).len(), 2);

    let train = [
        "train-s2s", "--data", "d", "--out", "s.ckpt", "--epochs", "2", "--label-mode", "lst", "--soft-labels",
        "soft.bin", "--set", "batch_frames=100",
    ];
    ok(dir, &train);
    assert_eq!(lines(&dir.join("s.ckpt.curves.csv")).len(), 3);

    ok(dir, &["eval", "--data", "d", "--model", "s.ckpt", "--lm", "lm.ckpt", "--fusion-weight", "0,0.1", "--beam", "2", "--out", "ev"]);
    for w in ["0", "0.1"] {
        let report = lines(&dir.join(format!("ev.w{w}.report.tsv")));
        assert_eq!(report.len(), 1 + 6 + 1);
        assert!(report.last().unwrap().starts_with("CER% "));
    }
    ok(dir, &["decode", "--data", "d", "--model", "s.ckpt", "--beam", "2", "--out", "dec"]);
    assert_eq!(lines(&dir.join("dec.decode.tsv")).len(), 6);
}

#[test]
fn zero_epochs_writes_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prep_tiny(dir, &[]);
    ok(dir, &["train-s2s", "--data", "d", "--out", "s.ckpt", "--epochs", "0"]);
    assert!(dir.join("s.ckpt").exists());
    assert_eq!(lines(&dir.join("s.ckpt.curves.csv")).len(), 1);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&lst(dir, &["prep"])), 2);
    assert_eq!(code(&lst(dir, &["no-such-command"])), 2);
    assert_eq!(code(&lst(dir, &["verify", "--only", "nope"])), 2);
    assert_eq!(code(&lst(dir, &["train-lm", "--data", "missing", "--out", "x"])), 3);
    assert_eq!(code(&lst(dir, &["prep", "--out", "d0", "--dup", "0"])), 2);

    prep_tiny(dir, &[]);
    ok(dir, &["train-s2s", "--data", "d", "--out", "s.ckpt", "--epochs", "1", "--set", "batch_frames=100"]);
    assert_eq!(code(&lst(dir, &["train-s2s", "--data", "d", "--out", "x.ckpt", "--label-mode", "lst"])), 2);
    assert_eq!(code(&lst(dir, &["eval", "--data", "d", "--model", "s.ckpt", "--fusion-weight", "0.1", "--out", "e"])), 2);
    assert_eq!(code(&lst(dir, &["eval", "--data", "d", "--model", "s.ckpt", "--beam", "1", "--max-cer", "0", "--out", "e"])), 1);
    assert_eq!(code(&lst(dir, &["eval", "--data", "d", "--model", "s.ckpt", "--beam", "1", "--max-cer", "1000", "--out", "e"])), 0);
}

#[test]
fn replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prep_tiny(dir, &[]);
    ok(dir, &["train-lm", "--data", "d", "--out", "lm.ckpt", "--epochs", "1", "--seed", "2"]);
    let train = [
        "train-s2s", "--data", "d", "--out", "s.ckpt", "--epochs", "2", "--label-mode", "lst", "--teacher", "lm.ckpt",
        "--set", "batch_frames=100",
    ];
    let out = Command::new(env!("CARGO_BIN_EXE_lst")).current_dir(dir).env("LST_SEED", "7").args(train).output().unwrap();
    assert_eq!(code(&out), 0);
    let manifest = fs::read_to_string(dir.join("s.ckpt.manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7"));
    let first = fs::read(dir.join("s.ckpt")).unwrap();
    fs::remove_file(dir.join("s.ckpt")).unwrap();
    ok(dir, &["--replay", "s.ckpt.manifest.txt"]);
    assert_eq!(first, fs::read(dir.join("s.ckpt")).unwrap());
    assert_eq!(manifest, fs::read_to_string(dir.join("s.ckpt.manifest.txt")).unwrap());
}

#[test]
fn max_len_filters_selected_text() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prep_tiny(dir, &["--max-len", "8"]);
    let transcripts: HashSet<String> =
        lines(&dir.join("d/train.tsv")).iter().map(|l| l.split('\t').nth(1).unwrap().to_string()).collect();
    let text = lines(&dir.join("d/lm_text.txt"));
    let external: Vec<&String> = text.iter().filter(|s| !transcripts.contains(*s)).collect();
    assert!(!external.is_empty());
    for s in external {
        assert!(s.chars().count() <= 8, "{s:?}");
    }
}

#[test]
fn empty_external_pool_keeps_transcripts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("empty.txt"), "").unwrap();
    prep_tiny(dir, &["--external", "empty.txt", "--dup", "2"]);
    let transcripts: HashSet<String> =
        lines(&dir.join("d/train.tsv")).iter().map(|l| l.split('\t').nth(1).unwrap().to_string()).collect();
    let text = lines(&dir.join("d/lm_text.txt"));
    assert_eq!(text.len(), 60);
    assert!(text.iter().all(|s| transcripts.contains(s)));
    assert!(fs::read_to_string(dir.join("d/selection.tsv")).unwrap().is_empty());
}

#[test]
fn verify_reports_tap_and_catches_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = ok(dir, &["verify", "--only", "kn"]);
    let tap = String::from_utf8(out.stdout).unwrap();
    assert!(tap.starts_with("TAP version 13\n1.."));
    assert!(!tap.contains("not ok"));

    let out = lst(dir, &["verify", "--only", "equivalence", "--inject-fault", "lst-sign"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stdout).unwrap().contains("not ok"));
}

#[test]
fn sweep_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prep_tiny(dir, &[]);
    ok(dir, &["train-lm", "--data", "d", "--out", "lm.ckpt", "--epochs", "1"]);
    let sweep = [
        "sweep", "--data", "d", "--out", "sw", "--modes", "hard,lst,uniform", "--lambdas", "0.9", "--temperatures",
        "1,5", "--fusion-weights", "0,0.1", "--beam", "2", "--teacher", "lm.ckpt", "--epochs", "1", "--set",
        "batch_frames=100",
    ];
    ok(dir, &sweep);
    let summary = lines(&dir.join("sw/summary.tsv"));
    // hard, lst at two temperatures, uniform; two weights each
    assert_eq!(summary.len(), 1 + 4 * 2);
    assert!(summary[1].starts_with("hard\t-\t-\t0\t"));
    assert!(dir.join("sw/lst_l0.9_t5.ckpt").exists());
    assert!(dir.join("sw/manifest.txt").exists());
    assert_eq!(code(&lst(dir, &["sweep", "--data", "d", "--out", "sw2", "--modes", "lst"])), 2);
}
