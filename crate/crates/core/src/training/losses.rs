use std::cell::Cell;

use crate::corpus::{TokenSeq, EOS};
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, LabelDistribution, Tensor};

thread_local! {
    static FLIP_LST_SIGN: Cell<bool> = const { Cell::new(false) };
}

/// Test hook: while set, [`lst_loss`] on this thread returns the negated loss.
/// Used by `verify --inject-fault` to show that the equivalence check bites.
pub fn set_lst_sign_fault(on: bool) {
    FLIP_LST_SIGN.with(|f| f.set(on));
}

fn lst_sign() -> f64 {
    if FLIP_LST_SIGN.with(Cell::get) {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelMode {
    Hard,
    Lst,
    UniformSmooth,
    UnigramOriginal,
    UnigramSmoothed,
}

impl LabelMode {
    pub const ALL: [LabelMode; 5] = [
        LabelMode::Hard,
        LabelMode::Lst,
        LabelMode::UniformSmooth,
        LabelMode::UnigramOriginal,
        LabelMode::UnigramSmoothed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Hard => "hard",
            LabelMode::Lst => "lst",
            LabelMode::UniformSmooth => "uniform",
            LabelMode::UnigramOriginal => "unigram",
            LabelMode::UnigramSmoothed => "unigram-smoothed",
        }
    }
}

impl std::fmt::Display for LabelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hard" => LabelMode::Hard,
            "lst" => LabelMode::Lst,
            "uniform" | "uniform_smooth" => LabelMode::UniformSmooth,
            "unigram" | "unigram_original" => LabelMode::UnigramOriginal,
            "unigram-smoothed" | "unigram_smoothed" => LabelMode::UnigramSmoothed,
            other => return Err(Error::invalid(format!("unknown label mode {other:?}"))),
        })
    }
}

/// How "+0.1" is added before renormalizing the unigram prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnigramFloor {
    /// `(freq_k + 0.1) / (1 + 0.1 K)` on normalized frequencies.
    NormalizedFrequencies,
    /// `(count_k + 0.1) / (N + 0.1 K)` on raw counts.
    RawCounts,
}

impl std::str::FromStr for UnigramFloor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(UnigramFloor::NormalizedFrequencies),
            "raw" => Ok(UnigramFloor::RawCounts),
            other => Err(Error::invalid(format!("unknown unigram floor {other:?}"))),
        }
    }
}

fn check_target(k: usize, target: usize) -> Result<()> {
    if target >= k {
        return Err(Error::invalid(format!("target {target} out of range for K={k}")));
    }
    Ok(())
}

/// `-log softmax(logits)[target]`.
pub fn ce_loss(logits: &[f64], target: usize) -> Result<f64> {
    check_target(logits.len(), target)?;
    Ok(-log_softmax(logits)[target])
}

/// `sum_k P_k log(P_k / Q_k)` with `0 log 0 = 0`.
pub fn kl_divergence(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid("distributions differ in size"));
    }
    let mut total = 0.0;
    for (k, (&pk, &qk)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Err(Error::invalid(format!("Q has no mass at {k} where P does")));
        }
        total += pk * (pk / qk).ln();
    }
    Ok(total)
}

/// `-sum_k teacher_k log softmax(student_logits)_k`.
pub fn lst_loss(student_logits: &[f64], teacher: &LabelDistribution) -> Result<f64> {
    if student_logits.len() != teacher.len() {
        return Err(Error::invalid("student logits and teacher differ in size"));
    }
    Ok(lst_sign() * soft_cross_entropy(student_logits, teacher))
}

fn soft_cross_entropy(logits: &[f64], target: &LabelDistribution) -> f64 {
    -log_softmax(logits)
        .iter()
        .zip(target.probs())
        .map(|(lp, p)| if *p == 0.0 { 0.0 } else { p * lp })
        .sum::<f64>()
}

/// `lambda * onehot(y) + (1 - lambda) * prior`, entry by entry.
pub fn interpolate(y: usize, prior: &LabelDistribution, lambda: f64) -> Result<LabelDistribution> {
    check_target(prior.len(), y)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let probs = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(k, &p)| lambda * if k == y { 1.0 } else { 0.0 } + (1.0 - lambda) * p)
        .collect();
    Ok(LabelDistribution::from_probs_unchecked(probs))
}

/// Training target for one step under `mode`.
pub fn build_target_distribution(
    mode: LabelMode,
    y: usize,
    teacher: Option<&LabelDistribution>,
    lambda: f64,
    k: usize,
    unigram: Option<&LabelDistribution>,
) -> Result<LabelDistribution> {
    check_target(k, y)?;
    let sized = |d: &LabelDistribution| -> Result<()> {
        if d.len() != k {
            return Err(Error::invalid(format!("prior of size {} for K={k}", d.len())));
        }
        Ok(())
    };
    match mode {
        LabelMode::Hard => LabelDistribution::one_hot(k, y),
        LabelMode::Lst => {
            let t = teacher.ok_or_else(|| Error::invalid("lst mode needs a teacher distribution"))?;
            sized(t)?;
            interpolate(y, t, lambda)
        }
        LabelMode::UniformSmooth => interpolate(y, &LabelDistribution::uniform(k), lambda),
        LabelMode::UnigramOriginal | LabelMode::UnigramSmoothed => {
            let u = unigram.ok_or_else(|| Error::invalid("unigram mode needs a unigram prior"))?;
            sized(u)?;
            interpolate(y, u, lambda)
        }
    }
}

/// Character frequencies of `corpus` over `k` ids; specials are never counted.
/// With `floor`, 0.1 is added per entry and the result renormalized.
pub fn unigram_prior(corpus: &[TokenSeq], k: usize, floor: Option<UnigramFloor>) -> Result<LabelDistribution> {
    let mut counts = vec![0.0; k];
    for s in corpus {
        s.check_range(k)?;
        for &id in s.ids.iter().filter(|&&id| id > EOS) {
            counts[id] += 1.0;
        }
    }
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return Err(Error::invalid("unigram prior over a corpus with no characters"));
    }
    let kf = k as f64;
    let probs = match floor {
        None => counts.iter().map(|c| c / n).collect(),
        Some(UnigramFloor::NormalizedFrequencies) => {
            counts.iter().map(|c| (c / n + 0.1) / (1.0 + 0.1 * kf)).collect()
        }
        Some(UnigramFloor::RawCounts) => counts.iter().map(|c| (c + 0.1) / (n + 0.1 * kf)).collect(),
    };
    Ok(LabelDistribution::from_probs_unchecked(probs))
}

fn check_rows(logits: &Tensor, rows: usize) -> Result<()> {
    if logits.rows() != rows {
        return Err(Error::invalid(format!(
            "{} logit rows for {rows} targets",
            logits.rows()
        )));
    }
    Ok(())
}

/// Mean over steps of `lambda * ce + (1 - lambda) * lst`.
pub fn combined_loss(logits: &Tensor, truth: &[usize], teacher: &[LabelDistribution], lambda: f64) -> Result<f64> {
    check_rows(logits, truth.len())?;
    if teacher.len() != truth.len() {
        return Err(Error::invalid("teacher and truth lengths differ"));
    }
    if truth.is_empty() {
        return Err(Error::invalid("no steps to average"));
    }
    let mut total = 0.0;
    for (t, (&y, p)) in truth.iter().zip(teacher).enumerate() {
        let row = logits.row(t);
        total += lambda * ce_loss(row, y)? + (1.0 - lambda) * lst_loss(row, p)?;
    }
    Ok(total / truth.len() as f64)
}

/// Mean over steps of `-sum_k target_k log softmax_k`.
pub fn soft_target_loss(logits: &Tensor, targets: &[LabelDistribution]) -> Result<f64> {
    check_rows(logits, targets.len())?;
    if targets.is_empty() {
        return Err(Error::invalid("no steps to average"));
    }
    let mut total = 0.0;
    for (t, d) in targets.iter().enumerate() {
        if d.len() != logits.cols() {
            return Err(Error::invalid("target and logits differ in size"));
        }
        total += soft_cross_entropy(logits.row(t), d);
    }
    Ok(total / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SOS;

    fn dist(p: &[f64]) -> LabelDistribution {
        LabelDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn ce_examples() {
        assert!((ce_loss(&[0.0; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-15);
        let lse = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((ce_loss(&[1.0, 2.0, 3.0], 0).unwrap() - (lse - 1.0)).abs() < 1e-14);
        assert!(ce_loss(&[0.0, 60.0], 1).unwrap() < 1e-20);
        assert!(matches!(ce_loss(&[0.0; 3], 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.9, 0.1]);
        let expect = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.5108).abs() < 1e-4);
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        let one = dist(&[0.0, 1.0]);
        assert!((kl_divergence(&one, &q).unwrap() + 0.1f64.ln()).abs() < 1e-15);
        assert!(kl_divergence(&p, &one).is_err());
    }

    #[test]
    fn target_examples() {
        let t = dist(&[0.5, 0.3, 0.2]);
        let d = build_target_distribution(LabelMode::Lst, 0, Some(&t), 0.9, 3, None).unwrap();
        for (a, b) in d.probs().iter().zip([0.95, 0.03, 0.02]) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = build_target_distribution(LabelMode::Lst, 2, Some(&t), 0.0, 3, None).unwrap();
        assert_eq!(zero.probs(), t.probs());
        for mode in LabelMode::ALL {
            let d = build_target_distribution(mode, 1, Some(&t), 1.0, 3, Some(&t)).unwrap();
            assert_eq!(d.probs(), &[0.0, 1.0, 0.0]);
        }
        assert!(build_target_distribution(LabelMode::Lst, 0, None, 0.9, 3, None).is_err());
    }

    #[test]
    fn unigram_examples() {
        let corpus = [TokenSeq::new(vec![SOS, 3, 3, EOS]), TokenSeq::new(vec![SOS, 4, 4, EOS])];
        let raw = unigram_prior(&corpus, 6, None).unwrap();
        assert_eq!(raw.probs(), &[0.0, 0.0, 0.0, 0.5, 0.5, 0.0]);
        let sm = unigram_prior(&corpus, 6, Some(UnigramFloor::NormalizedFrequencies)).unwrap();
        assert!(sm.probs().iter().all(|&p| p >= 0.1 / 1.6 - 1e-15));
        assert!((sm.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // Frequencies {1, 0} over K = 2.
        let floor = |f: f64| (f + 0.1) / (1.0 + 0.1 * 2.0);
        assert!((floor(1.0) - 0.9167).abs() < 1e-4 && (floor(0.0) - 0.0833).abs() < 1e-4);
    }

    #[test]
    fn fault_hook_flips_lst_sign() {
        let t = dist(&[0.2, 0.8]);
        let clean = lst_loss(&[0.1, 0.4], &t).unwrap();
        set_lst_sign_fault(true);
        let faulty = lst_loss(&[0.1, 0.4], &t).unwrap();
        set_lst_sign_fault(false);
        assert_eq!(faulty, -clean);
    }
}
