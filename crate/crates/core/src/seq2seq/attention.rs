use super::Dropout;
use crate::numerics::{Tape, Var};

/// `mask[i * n + j]` is true when query `i` may look at key `j <= i`.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|ij| ij % n <= ij / n).collect()
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`; masked keys get zero weight.
pub fn attention(tape: &mut Tape<'_>, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Var {
    attention_with_dropout(tape, q, k, v, mask, &mut Dropout::off())
}

pub(crate) fn attention_with_dropout(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&[bool]>,
    drop: &mut Dropout,
) -> Var {
    let dk = tape.value(q).cols();
    let scores = tape.matmul_bt(q, k);
    let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    let weights = tape.softmax_rows(scores, mask);
    let weights = drop.apply(tape, weights);
    tape.matmul(weights, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn single_key_returns_its_value() {
        let mut tape = Tape::new();
        let q = tape.leaf(Tensor::matrix(2, 2, vec![3.0, -1.0, 0.2, 7.0]));
        let k = tape.leaf(Tensor::matrix(1, 2, vec![0.5, 0.5]));
        let v = tape.leaf(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]));
        let out = attention(&mut tape, q, k, v, None);
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn identical_keys_average_values() {
        let mut tape = Tape::new();
        let q = tape.leaf(Tensor::matrix(1, 2, vec![0.3, 0.9]));
        let k = tape.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]));
        let v = tape.leaf(Tensor::matrix(3, 1, vec![3.0, 6.0, 9.0]));
        let out = attention(&mut tape, q, k, v, None);
        assert!((tape.value(out).item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_case() {
        // scores / sqrt(2): q0.k = [1, 0] -> weights [e^{1/sqrt2}, 1] normalized.
        let mut tape = Tape::new();
        let q = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let k = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]));
        let v = tape.leaf(Tensor::matrix(2, 1, vec![10.0, 20.0]));
        let out = attention(&mut tape, q, k, v, None);
        let a = (1.0 / 2f64.sqrt()).exp();
        let w0 = a / (a + 1.0);
        assert!((tape.value(out).get2(0, 0) - (10.0 * w0 + 20.0 * (1.0 - w0))).abs() < 1e-12);
        assert!((tape.value(out).get2(1, 0) - 15.0).abs() < 1e-12);

        let mask = causal_mask(2);
        assert_eq!(mask, vec![true, false, true, true]);
        let out = attention(&mut tape, q, k, v, Some(&mask));
        assert_eq!(tape.value(out).get2(0, 0), 10.0);
    }
}
