use crate::error::{Error, Result};

/// Probability vector over the vocabulary: a hard label, a teacher's soft
/// label, or a smoothed target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

pub(crate) const SUM_TOLERANCE: f64 = 1e-9;

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("distribution entries must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("distribution sums to {total}")));
        }
        Ok(LabelDistribution { probs })
    }

    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        LabelDistribution { probs }
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("cannot normalize weights"));
        }
        Ok(LabelDistribution {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::invalid(format!("one-hot index {index} out of range {k}")));
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Ok(LabelDistribution { probs })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        LabelDistribution {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Shannon entropy in nats, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > self.probs[best] { i } else { best })
    }

    /// Keeps the `m` most probable entries and renormalizes.
    pub fn truncated_top(&self, m: usize) -> Self {
        if m >= self.probs.len() {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        let mut kept = vec![0.0; self.probs.len()];
        for &i in &order[..m.max(1)] {
            kept[i] = self.probs[i];
        }
        Self::normalized(kept).expect("top entries carry mass")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(LabelDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(LabelDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(LabelDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(LabelDistribution::new(vec![]).is_err());
        assert!(LabelDistribution::one_hot(3, 3).is_err());
    }

    #[test]
    fn truncation_renormalizes() {
        let d = LabelDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let t = d.truncated_top(2);
        assert!((t.probs()[0] - 0.625).abs() < 1e-12);
        assert_eq!(t.probs()[2], 0.0);
    }
}
