use crate::corpus::TokenSeq;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
    /// `100 * (S + D + I) / ref_len`.
    pub rate: f64,
}

impl CerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// One step of an alignment, as indices into the reference and hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match(usize, usize),
    Substitute(usize, usize),
    Delete(usize),
    Insert(usize),
}

/// Unit-cost Levenshtein alignment, in order. Among minimal alignments the
/// backtrace prefers diagonal moves, then deletions.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                i -= 1;
                j -= 1;
                ops.push(if same { EditOp::Match(i, j) } else { EditOp::Substitute(i, j) });
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            i -= 1;
            ops.push(EditOp::Delete(i));
        } else {
            j -= 1;
            ops.push(EditOp::Insert(j));
        }
    }
    ops.reverse();
    ops
}

/// `(S, D, I)` of [`align`].
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, usize, usize) {
    align(reference, hypothesis).iter().fold((0, 0, 0), |(s, d, i), op| match op {
        EditOp::Match(..) => (s, d, i),
        EditOp::Substitute(..) => (s + 1, d, i),
        EditOp::Delete(_) => (s, d + 1, i),
        EditOp::Insert(_) => (s, d, i + 1),
    })
}

/// Character error rate with specials stripped from both sides.
pub fn cer(reference: &TokenSeq, hypothesis: &TokenSeq) -> Result<CerCounts> {
    let r = reference.without_specials();
    let h = hypothesis.without_specials();
    if r.is_empty() {
        return Err(Error::invalid("reference is empty"));
    }
    let (s, d, i) = edit_counts(&r, &h);
    Ok(CerCounts {
        substitutions: s,
        deletions: d,
        insertions: i,
        ref_len: r.len(),
        rate: 100.0 * (s + d + i) as f64 / r.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EOS, SOS};
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::new(s.bytes().map(|b| (b - b'a') as usize + 3).collect())
    }

    #[test]
    fn examples() {
        let c = cer(&seq("abc"), &seq("abc")).unwrap();
        assert_eq!((c.errors(), c.rate), (0, 0.0));
        let c = cer(&seq("abcde"), &TokenSeq::new(vec![SOS, EOS])).unwrap();
        assert_eq!((c.substitutions, c.deletions, c.insertions, c.rate), (0, 5, 0, 100.0));
        let c = cer(&seq("abc"), &seq("axcd")).unwrap();
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 0, 1));
        assert!((c.rate - 200.0 / 3.0).abs() < 1e-12);
        assert!(cer(&TokenSeq::new(vec![SOS, EOS]), &seq("a")).is_err());
    }

    proptest! {
        #[test]
        fn counts_are_consistent(r in "[a-d]{1,12}", h in "[a-d]{0,12}") {
            let (s, d, i) = edit_counts(r.as_bytes(), h.as_bytes());
            prop_assert_eq!(h.len() as isize - r.len() as isize, i as isize - d as isize);
            prop_assert!(s + d <= r.len());
        }

        #[test]
        fn alignment_walks_both_strings_in_order(r in "[a-c]{0,10}", h in "[a-c]{0,10}") {
            let (rb, hb) = (r.as_bytes(), h.as_bytes());
            let (mut i, mut j) = (0, 0);
            for op in align(rb, hb) {
                match op {
                    EditOp::Match(a, b) => { prop_assert_eq!((a, b), (i, j)); prop_assert_eq!(rb[a], hb[b]); i += 1; j += 1; }
                    EditOp::Substitute(a, b) => { prop_assert_eq!((a, b), (i, j)); prop_assert_ne!(rb[a], hb[b]); i += 1; j += 1; }
                    EditOp::Delete(a) => { prop_assert_eq!(a, i); i += 1; }
                    EditOp::Insert(b) => { prop_assert_eq!(b, j); j += 1; }
                }
            }
            prop_assert_eq!((i, j), (rb.len(), hb.len()));
        }

        #[test]
        fn relabeling_preserves_cer(r in "[a-e]{1,10}", h in "[a-e]{0,10}") {
            let swap = |s: &str| s.chars().map(|c| (b'a' + (b'e' - c as u8)) as char).collect::<String>();
            let a = cer(&seq(&r), &seq(&h)).unwrap();
            let b = cer(&seq(&swap(&r)), &seq(&swap(&h))).unwrap();
            prop_assert_eq!(a.errors(), b.errors());
        }
    }
}
