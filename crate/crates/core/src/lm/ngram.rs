use std::collections::HashMap;

use crate::corpus::{TokenSeq, SOS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
struct ContextStats {
    counts: HashMap<usize, f64>,
    total: f64,
}

/// Interpolated Kneser-Ney model with one absolute discount for every order.
///
/// The highest order uses raw counts, lower orders use continuation counts
/// (number of distinct left extensions), and the recursion bottoms out in the
/// uniform distribution over the vocabulary.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    discount: f64,
    /// `tables[m - 1]` maps an `(m-1)`-token context to its order-`m` counts.
    tables: Vec<HashMap<Vec<usize>, ContextStats>>,
}

/// Trains with the default discount of 0.75.
pub fn kn_train(corpus: &[TokenSeq], order: usize, vocab_size: usize) -> Result<NGramModel> {
    NGramModel::train(corpus, order, vocab_size, 0.75)
}

pub fn kn_prob(m: &NGramModel, context: &[usize], token: usize) -> f64 {
    m.prob(context, token)
}

impl NGramModel {
    /// Sentences are `<sos> ... <eos>`; histories are padded with `order - 1` `<sos>`.
    pub fn train(corpus: &[TokenSeq], order: usize, vocab_size: usize, discount: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("n-gram training corpus is empty"));
        }
        if order == 0 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::invalid(format!("discount must lie in (0, 1], got {discount}")));
        }
        let mut top: HashMap<Vec<usize>, usize> = HashMap::new();
        for s in corpus {
            s.check_range(vocab_size)?;
            if s.ids.first() != Some(&SOS) {
                return Err(Error::invalid("n-gram sentences must start with <sos>"));
            }
            let padded = pad(&s.ids[1..], order);
            for w in padded.windows(order) {
                *top.entry(w.to_vec()).or_default() += 1;
            }
        }

        let mut tables: Vec<HashMap<Vec<usize>, ContextStats>> = vec![HashMap::new(); order];
        for (gram, &c) in &top {
            add(&mut tables[order - 1], gram, c as f64);
        }
        // Each distinct order-(m+1) n-gram adds one left extension to its order-m suffix.
        let mut higher: Vec<Vec<usize>> = top.keys().cloned().collect();
        for m in (1..order).rev() {
            let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
            for gram in &higher {
                let suffix = gram[1..].to_vec();
                add(&mut tables[m - 1], &suffix, 1.0);
                seen.insert(suffix, ());
            }
            higher = seen.into_keys().collect();
        }
        Ok(NGramModel { order, vocab_size, discount, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `P(token | context)`, using the last `order - 1` tokens of the context
    /// (left-padded with `<sos>` when shorter).
    pub fn prob(&self, context: &[usize], token: usize) -> f64 {
        if token >= self.vocab_size {
            return 0.0;
        }
        let h = self.order - 1;
        let mut ctx = vec![SOS; h.saturating_sub(context.len())];
        ctx.extend_from_slice(&context[context.len().saturating_sub(h)..]);
        self.interpolated(&ctx, token)
    }

    fn interpolated(&self, ctx: &[usize], token: usize) -> f64 {
        let lower = if ctx.is_empty() {
            1.0 / self.vocab_size as f64
        } else {
            self.interpolated(&ctx[1..], token)
        };
        let Some(stats) = self.tables[ctx.len()].get(ctx) else {
            return lower;
        };
        let c = stats.counts.get(&token).copied().unwrap_or(0.0);
        let distinct = stats.counts.len() as f64;
        (c - self.discount).max(0.0) / stats.total + self.discount * distinct / stats.total * lower
    }

    pub fn sentence_log_probs(&self, ids: &[usize]) -> Vec<f64> {
        (1..ids.len()).map(|t| self.prob(&ids[..t], ids[t]).ln()).collect()
    }
}

fn pad(body: &[usize], order: usize) -> Vec<usize> {
    let mut v = vec![SOS; order - 1];
    v.extend_from_slice(body);
    v
}

fn add(table: &mut HashMap<Vec<usize>, ContextStats>, gram: &[usize], c: f64) {
    let (ctx, w) = gram.split_at(gram.len() - 1);
    let stats = table.entry(ctx.to_vec()).or_default();
    *stats.counts.entry(w[0]).or_default() += c;
    stats.total += c;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS;

    fn seqs(raw: &[&[usize]]) -> Vec<TokenSeq> {
        raw.iter()
            .map(|body| {
                let mut ids = vec![SOS];
                ids.extend_from_slice(body);
                ids.push(EOS);
                TokenSeq::new(ids)
            })
            .collect()
    }

    #[test]
    fn dominant_bigram_wins() {
        let m = kn_train(&seqs(&[&[3, 4, 3, 4, 3, 4][..]; 4]), 3, 6).unwrap();
        assert!(kn_prob(&m, &[3], 4) > kn_prob(&m, &[3], 3));
    }

    #[test]
    fn every_context_sums_to_one() {
        let corpus = seqs(&[&[3, 4, 5], &[5, 5, 3, 4], &[4, 3]]);
        for order in 1..=3 {
            let m = kn_train(&corpus, order, 7).unwrap();
            for ctx in [vec![], vec![3], vec![SOS, 3], vec![5, 5], vec![6, 6], vec![0, 4, 3]] {
                let s: f64 = (0..7).map(|k| kn_prob(&m, &ctx, k)).sum();
                assert!((s - 1.0).abs() < 1e-12, "order {order} ctx {ctx:?}: {s}");
            }
        }
    }

    #[test]
    fn unigram_order_is_interpolated_frequency() {
        // Counts over predicted tokens: 3 -> 3, 4 -> 1, eos -> 2.
        let m = kn_train(&seqs(&[&[3, 3, 4], &[3]]), 1, 6).unwrap();
        let expect = |c: f64| (c - 0.75f64).max(0.0) / 6.0 + 0.75 * 3.0 / 6.0 / 6.0;
        assert!((m.prob(&[], 3) - expect(3.0)).abs() < 1e-15);
        assert!((m.prob(&[], 4) - expect(1.0)).abs() < 1e-15);
        assert!((m.prob(&[], 5) - expect(0.0)).abs() < 1e-15);
        assert!(m.prob(&[], 3) > m.prob(&[], EOS) && m.prob(&[], EOS) > m.prob(&[], 4));
    }
}
