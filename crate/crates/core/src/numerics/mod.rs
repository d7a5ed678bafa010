//! Dense tensors, a reverse-mode tape, and the finite-difference oracle used
//! to check it.

mod distribution;
mod params;
mod tape;
mod tensor;

pub use distribution::LabelDistribution;
pub use params::{ParamId, ParamStore};
pub use tape::{gradient, log_softmax, Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// `exp(z_k / T) / sum_i exp(z_i / T)`, with max-subtraction.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<LabelDistribution> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax over empty logits"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(LabelDistribution::from_probs_unchecked(
        exps.into_iter().map(|e| e / total).collect(),
    ))
}

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn finite_difference_gradient(f: impl Fn(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    assert!(eps > 0.0, "eps must be positive");
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    out
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over corresponding entries.
pub fn max_relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn temperature_softmax_examples() {
        let p = softmax_with_temperature(&[0.0, 0.0, 0.0], 5.0).unwrap();
        for &v in p.probs() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_with_temperature(&[2.0, 0.0], 2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p.probs()[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p.probs()[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((p.probs()[0] - 0.7311).abs() < 1e-4);

        let plain: Vec<f64> = log_softmax(&[1.0, 2.0, 3.0]).iter().map(|l| l.exp()).collect();
        let p = softmax_with_temperature(&[1.0, 2.0, 3.0], 1.0).unwrap();
        for (a, b) in p.probs().iter().zip(&plain) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn temperature_softmax_errors() {
        assert!(softmax_with_temperature(&[], 1.0).is_err());
        assert!(softmax_with_temperature(&[1.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[1.0], -2.0).is_err());
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax_with_temperature(&[1e4, -1e4, 0.0], 1.0).unwrap();
        assert!(p.probs().iter().all(|v| v.is_finite()));
        assert!((p.probs()[0] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_properties(logits in prop::collection::vec(-50.0f64..50.0, 1..12), t in 0.05f64..100.0) {
            let p = softmax_with_temperature(&logits, t).unwrap();
            let s: f64 = p.probs().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(p.probs().iter().all(|&v| v >= 0.0));
            let arg = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b });
            prop_assert_eq!(arg(p.probs()), arg(&logits));
        }

        #[test]
        fn high_temperature_is_near_uniform(logits in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let p = softmax_with_temperature(&logits, 1e6).unwrap();
            let k = logits.len() as f64;
            prop_assert!(p.probs().iter().all(|v| (v - 1.0 / k).abs() <= 1e-4));
        }
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = tape.sum(x);
        let g = gradient(&tape, s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn gradient_of_half_squared_norm_is_x() {
        let xv = Tensor::matrix(1, 4, vec![1.0, -2.0, 3.5, 0.25]);
        let mut tape = Tape::new();
        let x = tape.leaf(xv.clone());
        let sq = tape.mul(x, x);
        let s = tape.sum(sq);
        let half = tape.scale(s, 0.5);
        let g = gradient(&tape, half).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &xv);
    }

    #[test]
    fn gradient_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]));
        assert!(matches!(gradient(&tape, x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unused_parameters_get_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add("used", Tensor::matrix(1, 2, vec![1.0, 2.0]));
        let unused = store.add("unused", Tensor::matrix(2, 2, vec![1.0; 4]));
        let mut tape = Tape::with_params(&store);
        let u = tape.param(used);
        let s = tape.sum(u);
        let g = gradient(&tape, s).unwrap();
        assert_eq!(g.param(used).data(), &[1.0, 1.0]);
        assert_eq!(g.param(unused), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let z = Tensor::matrix(1, 4, vec![0.3, -1.2, 2.0, 0.7]);
        let k = 2;
        let mut tape = Tape::new();
        let x = tape.leaf(z.clone());
        let lp = tape.log_softmax_rows(x);
        let mut onehot = Tensor::zeros(&[1, 4]);
        onehot.data_mut()[k] = -1.0;
        let loss = tape.dot_const(lp, onehot);
        let g = gradient(&tape, loss).unwrap();
        let p = softmax_with_temperature(z.data(), 1.0).unwrap();
        for (i, gi) in g.wrt(x).unwrap().data().iter().enumerate() {
            let expected = p.probs()[i] - if i == k { 1.0 } else { 0.0 };
            assert!((gi - expected).abs() < 1e-12);
        }
        let fd = finite_difference_gradient(
            |t| -log_softmax(t.data())[k],
            &z,
            1e-5,
        );
        assert!(max_relative_error(g.wrt(x).unwrap(), &fd, 1e-8) < 1e-6);
    }

    #[test]
    fn finite_difference_examples() {
        let x = Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        let fd = finite_difference_gradient(|t| t.sum(), &x, 1e-5);
        for v in fd.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        let fd = finite_difference_gradient(|t| t.item() * t.item(), &Tensor::scalar(3.0), 1e-5);
        assert!((fd.item() - 6.0).abs() < 1e-6);
    }

    /// Composite function touching every op; checked against central differences.
    fn every_op(tape: &mut Tape<'_>, x: Var, w: Var, row: Var) -> Var {
        let a = tape.matmul(x, w);
        let b = tape.matmul_bt(a, x);
        let bt = tape.transpose(b);
        let c = tape.add(b, bt);
        let d = tape.sub(c, b);
        let e = tape.mul(d, b);
        let f = tape.tanh(e);
        let g = tape.sigmoid(a);
        let h = tape.relu(g);
        let h = tape.add_row(h, row);
        let h = tape.mul_row(h, row);
        let h = tape.layer_norm_rows(h, 1e-5);
        let mask = [true, false, true, true];
        let s = tape.softmax_rows(f, Some(&mask[..]));
        let ls = tape.log_softmax_rows(h);
        let cc = tape.concat_cols(&[s, ls]);
        let sc = tape.slice_cols(cc, 1, 3);
        let cr = tape.concat_rows(&[sc, sc]);
        let sr = tape.slice_rows(cr, 1, 3);
        let gt = tape.gather_rows(w, &[1, 0, 1]);
        let gts = tape.slice_cols(gt, 0, 3);
        let m = tape.mul(sr, gts);
        let m = tape.scale(m, 0.7);
        let m = tape.add_const(m, &Tensor::filled(&[3, 3], 0.1));
        let m = tape.mul_const(m, Tensor::filled(&[3, 3], 1.3));
        let s1 = tape.sum(m);
        let s2 = tape.dot_const(h, Tensor::matrix(2, 3, vec![0.5, -1.0, 0.3, 2.0, 0.1, -0.4]));
        tape.add(s1, s2)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let xs = random(&mut rng, 2, 3);
            let ws = random(&mut rng, 3, 3);
            let rs = random(&mut rng, 1, 3);
            let mut tape = Tape::new();
            let (x, w, r) = (tape.leaf(xs.clone()), tape.leaf(ws.clone()), tape.leaf(rs.clone()));
            let out = every_op(&mut tape, x, w, r);
            let g = gradient(&tape, out).unwrap();

            let eval = |xs: &Tensor, ws: &Tensor, rs: &Tensor| {
                let mut t = Tape::new();
                let (x, w, r) = (t.leaf(xs.clone()), t.leaf(ws.clone()), t.leaf(rs.clone()));
                let o = every_op(&mut t, x, w, r);
                t.value(o).item()
            };
            let fx = finite_difference_gradient(|t| eval(t, &ws, &rs), &xs, 1e-5);
            let fw = finite_difference_gradient(|t| eval(&xs, t, &rs), &ws, 1e-5);
            let fr = finite_difference_gradient(|t| eval(&xs, &ws, t), &rs, 1e-5);
            assert!(max_relative_error(g.wrt(x).unwrap(), &fx, 1e-6) < 1e-4);
            assert!(max_relative_error(g.wrt(w).unwrap(), &fw, 1e-6) < 1e-4);
            assert!(max_relative_error(g.wrt(r).unwrap(), &fr, 1e-6) < 1e-4);
        }
    }

    #[test]
    fn backward_visits_shared_nodes_once() {
        // y = x*x + x*x, the product node is reached twice.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.mul(x, x);
        let y = tape.add(sq, sq);
        let g = gradient(&tape, y).unwrap();
        assert_eq!(g.wrt(x).unwrap().item(), 12.0);
    }
}
