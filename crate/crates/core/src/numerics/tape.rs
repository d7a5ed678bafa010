//! Define-by-run reverse-mode differentiation over 2-D tensors.
//!
//! Every forward op appends a node to the [`Tape`]; nodes only reference
//! earlier nodes, so creation order is a topological order and the
//! backward sweep in [`gradient`] is a single reverse pass.

use std::borrow::Cow;
use std::rc::Rc;

use super::tensor::{matmul, matmul_at, matmul_bt};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConst(Var, Tensor),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNormRows { x: Var, xhat: Tensor, inv_std: Vec<f64> },
    Gather { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    Transpose(Var),
    SumAll(Var),
    DotConst(Var, Tensor),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
}

/// Recording of one forward pass.
pub struct Tape<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node<'p>>,
    bound: Vec<Option<Var>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    /// A tape with no parameters; gradients are taken w.r.t. leaves.
    pub fn new() -> Self {
        Tape {
            store: None,
            nodes: Vec::new(),
            bound: Vec::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Tape {
            store: Some(store),
            nodes: Vec::new(),
            bound: vec![None; store.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape2(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// Input or constant. Its gradient is available via [`Gradients::wrt`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds parameter `id`; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let store = self.store.expect("tape was created without a parameter store");
        self.nodes.push(Node {
            value: Cow::Borrowed(store.get(id)),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape2(a);
        let (k2, n) = self.shape2(b);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape2(a);
        let (n, k2) = self.shape2(b);
        assert_eq!(k, k2, "matmul_bt inner dims {k} vs {k2}");
        let out = matmul_bt(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::matrix(m, n, out), Op::MatMulBt(a, b))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::matrix(ta.rows(), ta.cols(), data);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape2(a);
        assert_eq!(self.shape2(row), (1, n), "add_row expects a 1x{n} row");
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone().reshaped(m, n);
        for i in 0..m {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape2(a);
        assert_eq!(self.shape2(row), (1, n), "mul_row expects a 1x{n} row");
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone().reshaped(m, n);
        for i in 0..m {
            for (o, g) in out.row_mut(i).iter_mut().zip(&r) {
                *o *= g;
            }
        }
        self.push(out, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// Adds a constant tensor (no gradient flows into it).
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), c.len(), "add_const size mismatch");
        let data = ta.data().iter().zip(c.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::matrix(ta.rows(), ta.cols(), data);
        self.push(out, Op::AddConst(a))
    }

    /// Elementwise product with a constant tensor (dropout masks, fixed weights).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), c.len(), "mul_const size mismatch");
        let data = ta.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::matrix(ta.rows(), ta.cols(), data);
        self.push(out, Op::MulConst(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Row-wise softmax. Entries where `mask` is false get exactly zero weight.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        if let Some(mask) = mask {
            assert_eq!(mask.len(), m * n, "mask size mismatch");
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = t.row(i);
            let keep = |j: usize| mask.is_none_or(|mk| mk[i * n + j]);
            let max = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max.is_finite(), "softmax row {i} is fully masked");
            let mut total = 0.0;
            for j in 0..n {
                if keep(j) {
                    let e = (row[j] - max).exp();
                    out[i * n + j] = e;
                    total += e;
                }
            }
            for v in &mut out[i * n..(i + 1) * n] {
                *v /= total;
            }
        }
        self.push(Tensor::matrix(m, n, out), Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(log_softmax(t.row(i)));
        }
        self.push(Tensor::matrix(m, n, out), Op::LogSoftmaxRows(a))
    }

    /// Row-wise standardisation `(x - mean) / sqrt(var + eps)`, no affine part.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = t.row(i);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std.push(s);
            xhat.extend(row.iter().map(|x| (x - mean) * s));
        }
        let xhat = Tensor::matrix(m, n, xhat);
        self.push(
            xhat.clone(),
            Op::LayerNormRows {
                x: a,
                xhat,
                inv_std,
            },
        )
    }

    /// Rows `ids` of `table`, stacked.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let n = t.cols();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            assert!(id < t.rows(), "gather index {id} out of range {}", t.rows());
            out.extend_from_slice(t.row(id));
        }
        let out = Tensor::matrix(ids.len(), n, out);
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), m, "concat_cols row mismatch");
                self.value(p).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(Tensor::matrix(m, total, out), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let t = self.value(a);
        assert!(start + width <= t.cols() && width > 0, "slice_cols out of range");
        let m = t.rows();
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&t.row(i)[start..start + width]);
        }
        self.push(Tensor::matrix(m, width, out), Op::SliceCols { x: a, start })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut m = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), n, "concat_rows col mismatch");
            out.extend_from_slice(t.data());
            m += t.rows();
        }
        self.push(Tensor::matrix(m, n, out), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Var {
        let t = self.value(a);
        assert!(start + count <= t.rows() && count > 0, "slice_rows out of range");
        let n = t.cols();
        let out = t.data()[start * n..(start + count) * n].to_vec();
        self.push(Tensor::matrix(count, n, out), Op::SliceRows { x: a, start })
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Scalar `sum(a * c)` with a constant `c`.
    pub fn dot_const(&mut self, a: Var, c: Tensor) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), c.len(), "dot_const size mismatch");
        let s = ta.data().iter().zip(c.data()).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(s), Op::DotConst(a, c))
    }
}

/// Stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Gradients of a scalar node w.r.t. every parameter and leaf it depends on.
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    leaves: Vec<Option<Rc<Tensor>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// `dLoss/dParam`; all zeros for parameters not on the tape.
    pub fn param(&self, id: ParamId) -> Tensor {
        match &self.params[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn param_ref(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient w.r.t. a leaf created by [`Tape::leaf`], if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .map(Tensor::squared_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.params.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    /// Clips the parameter gradients to a global L2 norm; returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Adds another set of parameter gradients into this one.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Reverse sweep from `loss`, which must be a single value.
pub fn gradient(tape: &Tape<'_>, loss: Var) -> Result<Gradients> {
    let lt = tape.value(loss);
    if lt.len() != 1 {
        return Err(Error::invalid(format!(
            "gradient() needs a scalar loss, got shape {:?}",
            lt.shape()
        )));
    }
    let n_params = tape.store.map_or(0, ParamStore::len);
    let mut params: Vec<Option<Tensor>> = vec![None; n_params];
    let mut leaves: Vec<Option<Rc<Tensor>>> = vec![None; loss.0 + 1];
    let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
    grads.resize_with(loss.0 + 1, || None);
    grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));

    for i in (0..=loss.0).rev() {
        let Some(g) = grads[i].take() else { continue };
        let node = &tape.nodes[i];
        let val = |v: Var| -> &Tensor { &tape.nodes[v.0].value };
        match &node.op {
            Op::Leaf => leaves[i] = Some(Rc::new(g)),
            Op::Param(id) => accumulate(&mut params[id.0], g),
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let ga = matmul_bt(g.data(), tb.data(), m, n, k);
                let gb = matmul_at(ta.data(), g.data(), m, k, n);
                accumulate(&mut grads[a.0], Tensor::matrix(m, k, ga));
                accumulate(&mut grads[b.0], Tensor::matrix(k, n, gb));
            }
            Op::MatMulBt(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                let ga = matmul(g.data(), tb.data(), m, n, k);
                let gb = matmul_at(g.data(), ta.data(), m, n, k);
                accumulate(&mut grads[a.0], Tensor::matrix(m, k, ga));
                accumulate(&mut grads[b.0], Tensor::matrix(n, k, gb));
            }
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], g.clone());
                accumulate(&mut grads[b.0], g);
            }
            Op::Sub(a, b) => {
                accumulate(&mut grads[a.0], g.clone());
                accumulate(&mut grads[b.0], g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let ga = zip(&g, val(*b), |x, y| x * y);
                let gb = zip(&g, val(*a), |x, y| x * y);
                accumulate(&mut grads[a.0], ga);
                accumulate(&mut grads[b.0], gb);
            }
            Op::AddRow(a, row) => {
                let n = g.cols();
                let mut gr = vec![0.0; n];
                for r in 0..g.rows() {
                    for (s, x) in gr.iter_mut().zip(g.row(r)) {
                        *s += x;
                    }
                }
                accumulate(&mut grads[row.0], Tensor::matrix(1, n, gr));
                accumulate(&mut grads[a.0], g);
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (val(*a), val(*row));
                let n = g.cols();
                let mut gr = vec![0.0; n];
                let mut ga = g.clone();
                for r in 0..g.rows() {
                    let (gi, ai) = (g.row(r), ta.row(r));
                    for j in 0..n {
                        gr[j] += gi[j] * ai[j];
                    }
                    for (x, w) in ga.row_mut(r).iter_mut().zip(tr.data()) {
                        *x *= w;
                    }
                }
                accumulate(&mut grads[row.0], Tensor::matrix(1, n, gr));
                accumulate(&mut grads[a.0], ga);
            }
            Op::Scale(a, s) => accumulate(&mut grads[a.0], g.map(|x| x * s)),
            Op::AddConst(a) => accumulate(&mut grads[a.0], g),
            Op::MulConst(a, c) => accumulate(&mut grads[a.0], zip(&g, c, |x, y| x * y)),
            Op::Sigmoid(a) => {
                let ga = zip(&g, &node.value, |d, y| d * y * (1.0 - y));
                accumulate(&mut grads[a.0], ga);
            }
            Op::Tanh(a) => {
                let ga = zip(&g, &node.value, |d, y| d * (1.0 - y * y));
                accumulate(&mut grads[a.0], ga);
            }
            Op::Relu(a) => {
                let ga = zip(&g, val(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                accumulate(&mut grads[a.0], ga);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = g.clone();
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let dot: f64 = gr.iter().zip(yr).map(|(d, p)| d * p).sum();
                    for ((o, d), p) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = p * (d - dot);
                    }
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = g.clone();
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let total: f64 = gr.iter().sum();
                    for ((o, d), lp) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = d - lp.exp() * total;
                    }
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::LayerNormRows { x, xhat, inv_std } => {
                let n = g.cols() as f64;
                let mut ga = g.clone();
                for (r, &s) in inv_std.iter().enumerate() {
                    let (gr, hr) = (g.row(r), xhat.row(r));
                    let sum_g: f64 = gr.iter().sum();
                    let sum_gh: f64 = gr.iter().zip(hr).map(|(a, b)| a * b).sum();
                    for ((o, d), h) in ga.row_mut(r).iter_mut().zip(gr).zip(hr) {
                        *o = s / n * (n * d - sum_g - h * sum_gh);
                    }
                }
                accumulate(&mut grads[x.0], ga);
            }
            Op::Gather { table, ids } => {
                let tt = val(*table);
                let mut gt = Tensor::zeros(&[tt.rows(), tt.cols()]);
                for (r, &id) in ids.iter().enumerate() {
                    for (o, d) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
                accumulate(&mut grads[table.0], gt);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (m, w) = (val(*p).rows(), val(*p).cols());
                    let mut gp = Vec::with_capacity(m * w);
                    for r in 0..m {
                        gp.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    accumulate(&mut grads[p.0], Tensor::matrix(m, w, gp));
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = val(*x);
                let w = g.cols();
                let mut gx = Tensor::zeros(&[tx.rows(), tx.cols()]);
                for r in 0..g.rows() {
                    gx.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for p in parts {
                    let m = val(*p).rows();
                    let gp = g.data()[offset * n..(offset + m) * n].to_vec();
                    accumulate(&mut grads[p.0], Tensor::matrix(m, n, gp));
                    offset += m;
                }
            }
            Op::SliceRows { x, start } => {
                let tx = val(*x);
                let n = tx.cols();
                let mut gx = Tensor::zeros(&[tx.rows(), n]);
                gx.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                accumulate(&mut grads[x.0], gx);
            }
            Op::Transpose(a) => accumulate(&mut grads[a.0], g.transpose()),
            Op::SumAll(a) => {
                let ta = val(*a);
                accumulate(&mut grads[a.0], Tensor::filled(&[ta.rows(), ta.cols()], g.item()));
            }
            Op::DotConst(a, c) => {
                let ta = val(*a);
                let s = g.item();
                let ga = Tensor::matrix(ta.rows(), ta.cols(), c.data().iter().map(|x| x * s).collect());
                accumulate(&mut grads[a.0], ga);
            }
        }
    }

    let shapes = match tape.store {
        Some(store) => store.ids().map(|id| store.get(id).shape().to_vec()).collect(),
        None => Vec::new(),
    };
    Ok(Gradients {
        params,
        leaves,
        shapes,
    })
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::matrix(a.rows(), a.cols(), data)
}
