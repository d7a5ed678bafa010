//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use lst_core::experiment::{asr_trend, lm_trend, replay_asr_trend, AsrTrend, ExperimentConfig};
use lst_core::manifest::RunManifest;
use lst_core::training::Checkpoint;
use lst_core::verify::{self, Check};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const SEED: u64 = 11;

struct Outcome {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

struct Suite {
    results: Vec<Outcome>,
}

impl Suite {
    fn record(&mut self, id: usize, title: &'static str, passed: bool, detail: String, elapsed: Duration) {
        let line = format!(
            "{} criterion {id:>2}: {title} ({detail}; {:.1}s)",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.results.push(Outcome { id, title, passed, detail, elapsed });
    }

    /// Criterion backed by verify groups, with an optional runtime budget.
    fn groups(&mut self, id: usize, title: &'static str, groups: &[&str], budget: Option<Duration>) {
        let start = Instant::now();
        let mut checks: Vec<Check> = Vec::new();
        for g in groups {
            match verify::run(Some(g), SEED) {
                Ok(c) => checks.extend(c),
                Err(e) => {
                    self.record(id, title, false, format!("error: {e}"), start.elapsed());
                    return;
                }
            }
        }
        let elapsed = start.elapsed();
        let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
        let over = budget.is_some_and(|b| elapsed > b);
        let mut detail = if failed.is_empty() {
            format!("{} checks", checks.len())
        } else {
            format!("failed: {}", failed.join("; "))
        };
        if let Some(b) = budget {
            detail.push_str(&format!(", budget {}s", b.as_secs_f64()));
        }
        self.record(id, title, failed.is_empty() && !over, detail, elapsed);
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn lm_ordering(suite: &mut Suite, cfg: &ExperimentConfig) {
    let start = Instant::now();
    let mut ok = 0;
    let mut rows = Vec::new();
    for &seed in &SEEDS {
        match lm_trend(seed, cfg) {
            Ok(t) => {
                ok += usize::from(t.rnn_matched < t.kn_matched && t.kn_matched < t.kn_mismatched);
                rows.push(format!("{:.2}<{:.2}<{:.2}", t.rnn_matched, t.kn_matched, t.kn_mismatched));
            }
            Err(e) => rows.push(format!("error {e}")),
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{ok}/5 seeds ordered, rnn<kn<kn-mismatched ppl {}", rows.join(" "));
    suite.record(8, "perplexity ordering", ok == 5 && elapsed < Duration::from_secs(120), detail, elapsed);
}

/// Checks that the curves CSV has one row per epoch and the kept checkpoint has the lowest dev CE.
fn curves_consistent(dir: &Path, name: &str, epochs: usize) -> Result<(), String> {
    let csv = fs::read_to_string(dir.join(format!("{name}.curves.csv"))).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    if lines.next() != Some("epoch,train_loss,dev_ce") {
        return Err(format!("{name}: unexpected header"));
    }
    let dev: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().and_then(|v| v.parse().ok()).ok_or_else(|| format!("{name}: bad row {l:?}")))
        .collect::<Result<_, _>>()?;
    if dev.len() != epochs {
        return Err(format!("{name}: {} rows for {epochs} epochs", dev.len()));
    }
    let best = Checkpoint::load(&dir.join(format!("{name}.ckpt"))).map_err(|e| e.to_string())?;
    let min = dev.iter().copied().fold(f64::INFINITY, f64::min);
    if best.dev_ce != min || dev[best.epoch - 1] != min {
        return Err(format!("{name}: kept epoch {} with dev ce {}, column min {min}", best.epoch, best.dev_ce));
    }
    Ok(())
}

fn same_bytes(a: &Path, b: &Path, files: &[&str]) -> Result<(), String> {
    for f in files {
        let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            (Ok(_), Ok(_)) => return Err(format!("{f} differs")),
            (x, y) => return Err(format!("{f}: {:?} / {:?}", x.err(), y.err())),
        }
    }
    Ok(())
}

/// Manifests name their own artifact paths, so only the recipe is compared.
fn same_run(a: &Path, b: &Path) -> Result<(), String> {
    let (a, b) = (RunManifest::read(a).map_err(|e| e.to_string())?, RunManifest::read(b).map_err(|e| e.to_string())?);
    if (&a.command, a.seed, &a.config) != (&b.command, b.seed, &b.config) {
        return Err("replayed manifest records a different run".into());
    }
    Ok(())
}

fn main() {
    let mut suite = Suite { results: Vec::new() };
    let total = Instant::now();

    suite.groups(1, "weighted-loss and interpolated-label forms agree", &["equivalence"], Some(Duration::from_secs(1)));
    suite.groups(2, "finite-difference gradients", &["gradients"], Some(Duration::from_secs(30)));
    suite.groups(3, "degenerate identities", &["identities"], None);
    suite.groups(4, "temperature limits", &["temperature"], None);
    suite.groups(5, "beam search oracle", &["beam"], Some(Duration::from_secs(1)));
    suite.groups(6, "CER oracle", &["cer"], None);
    suite.groups(7, "Kneser-Ney normalization", &["kn"], None);

    let cfg = ExperimentConfig::default();
    lm_ordering(&mut suite, &cfg);

    let tmp = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let mut runs: Vec<(u64, AsrTrend)> = Vec::new();
    let mut errors = Vec::new();
    for &seed in &SEEDS {
        let seed_start = Instant::now();
        match asr_trend(seed, &cfg, Some(&tmp.path().join(format!("seed{seed}")))) {
            Ok(r) => {
                println!(
                    "     seed {seed}: baseline {:.2}  lst {:.2}  lst+sf {:.2}  ({:.0}s)",
                    r.baseline.report.cer,
                    r.lst.report.cer,
                    r.lst_fused.cer,
                    seed_start.elapsed().as_secs_f64()
                );
                runs.push((seed, r));
            }
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    if errors.is_empty() {
        let base: Vec<f64> = runs.iter().map(|(_, r)| r.baseline.report.cer).collect();
        let lst: Vec<f64> = runs.iter().map(|(_, r)| r.lst.report.cer).collect();
        let fused: Vec<f64> = runs.iter().map(|(_, r)| r.lst_fused.cer).collect();
        let wins = base.iter().zip(&lst).filter(|(b, l)| l < b).count();
        let (mb, ml, mf) = (mean(&base), mean(&lst), mean(&fused));
        let passed = ml <= mb && mf <= ml && wins >= 4 && elapsed < Duration::from_secs(15 * 60);
        let detail = format!("mean CER baseline {mb:.2} lst {ml:.2} lst+sf {mf:.2}, lst wins {wins}/5");
        suite.record(9, "LST beats baseline, fusion helps further", passed, detail, elapsed);
    } else {
        suite.record(9, "LST beats baseline, fusion helps further", false, errors.join("; "), elapsed);
    }

    suite.groups(10, "learning-rate schedule", &["schedule"], None);

    let start = Instant::now();
    let mut problems = Vec::new();
    for (seed, r) in &runs {
        let dir = tmp.path().join(format!("seed{seed}"));
        for (name, run) in [("baseline", &r.baseline), ("lst", &r.lst)] {
            if run.outcome.curves.len() != cfg.train.epochs {
                problems.push(format!("seed {seed} {name}: {} curve rows", run.outcome.curves.len()));
            }
            if let Err(e) = curves_consistent(&dir, name, cfg.train.epochs) {
                problems.push(format!("seed {seed} {e}"));
            }
        }
    }
    let passed = !runs.is_empty() && problems.is_empty();
    let detail = if passed { format!("{} curves checked", 2 * runs.len()) } else { problems.join("; ") };
    suite.record(11, "curves CSV and best-checkpoint selection", passed, detail, start.elapsed());

    let start = Instant::now();
    let first = tmp.path().join("seed0");
    let second = tmp.path().join("replay0");
    let files = [
        "teacher.ckpt",
        "baseline.ckpt",
        "lst.ckpt",
        "baseline.curves.csv",
        "lst.curves.csv",
        "baseline.report.tsv",
        "lst.report.tsv",
        "lst_fused.report.tsv",
        "baseline.decode.tsv",
        "lst.decode.tsv",
        "lst_fused.decode.tsv",
    ];
    let replayed = RunManifest::read(&first.join("manifest.txt"))
        .map_err(|e| e.to_string())
        .and_then(|m| replay_asr_trend(&m, &second).map_err(|e| e.to_string()))
        .and_then(|_| same_bytes(&first, &second, &files))
        .and_then(|_| same_run(&first.join("manifest.txt"), &second.join("manifest.txt")));
    let detail = match &replayed {
        Ok(()) => format!("{} files byte-identical after replay, same recorded run", files.len()),
        Err(e) => e.clone(),
    };
    suite.record(12, "replaying a manifest is byte-identical", replayed.is_ok(), detail, start.elapsed());

    let failed: Vec<&Outcome> = suite.results.iter().filter(|o| !o.passed).collect();
    println!(
        "{}/{} criteria passed in {:.0}s",
        suite.results.len() - failed.len(),
        suite.results.len(),
        total.elapsed().as_secs_f64()
    );
    for o in &failed {
        println!("failed: criterion {} ({}) {} after {:.1}s", o.id, o.title, o.detail, o.elapsed.as_secs_f64());
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
