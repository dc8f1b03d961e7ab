//! Tape-based reverse-mode differentiation over dense 2-D tensors.
//!
//! Every forward op appends a node to the [`Tape`] that records its parents
//! and whatever it needs for its backward rule. [`Tape::backward`] sweeps the
//! tape in reverse creation order, which is a valid topological order
//! because a node can only reference nodes created before it.
//!
//! The op set is exactly what the recommender needs: dense and sparse
//! products, element-wise arithmetic, row-wise softmax / normalization /
//! log-sum-exp, gathers, and [`Tape::stop_gradient`].

mod check;
mod init;

use std::sync::Arc;

pub use check::{finite_diff_check, GradCheckReport};
pub use init::{xavier_bound, Init};

use crate::error::{Error, Result};
use crate::graph::SparseOperator;
use crate::tensor::{self, dot, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Test hooks that deliberately break a backward rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// `stop_gradient` passes gradients through as if it were the identity.
    LeakyStopGradient,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulTN(Var, Var),
    MatMulNT(Var, Var),
    SpMM(SparseOperator<T>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    Hadamard(Var, Var),
    RowSoftmax(Var, T),
    /// Keeps the per-row norms; zero rows are stored as zero.
    RowL2Normalize(Var, Vec<T>),
    LogSigmoid(Var),
    Exp(Var),
    Log(Var),
    ReduceSum(Var),
    GatherRows(Var, Arc<[usize]>),
    StopGradient(Var),
    RowDot(Var, Var),
    ScaleRows(Var, Var),
    ConcatCols(Vec<Var>),
    SelectCol(Var, usize),
    RowLogSumExp(Var),
    PickCols(Var, Arc<[usize]>),
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    /// Values produced by every `stop_gradient` call, in call order.
    stopped: Vec<Tensor<T>>,
    /// When set, `stop_gradient` emits these recorded values instead of its
    /// input, which turns the tape into the detached function.
    frozen: Option<Vec<Tensor<T>>>,
    fault: Fault,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            stopped: Vec::new(),
            frozen: None,
            fault: Fault::None,
        }
    }

    /// A tape whose `stop_gradient` outputs replay `frozen` in call order.
    pub fn replaying(frozen: Vec<Tensor<T>>) -> Self {
        Self {
            frozen: Some(frozen),
            ..Self::new()
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values captured by `stop_gradient` so far.
    pub fn stopped_values(&self) -> &[Tensor<T>] {
        &self.stopped
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of `v`, or zeros if nothing reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        let (r, c) = self.shape(v);
        self.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(r, c))
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// A trainable leaf initialized per `init`.
    pub fn param(&mut self, rows: usize, cols: usize, init: Init) -> Result<Var> {
        let value = init.build(rows, cols)?;
        Ok(self.leaf(value, true))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(())
        } else {
            Err(Error::Dimension {
                op,
                left: sa,
                right: sb,
            })
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_tn(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulTN(a, b), &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulNT(a, b), &[a, b]))
    }

    /// Sparse-dense product; the backward pass uses the stored adjoint.
    pub fn spmm(&mut self, op: &SparseOperator<T>, x: Var) -> Result<Var> {
        let out = op.forward.spmm(self.value(x))?;
        Ok(self.push(out, Op::SpMM(op.clone(), x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Left-to-right sum of one or more same-shape nodes.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::Contract("add_all of nothing".into()))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let vb = self.value(b);
        let mut out = self.value(a).clone();
        for (o, &y) in out.data_mut().iter_mut().zip(vb.data()) {
            *o -= y;
        }
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn div_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        if c == T::zero() {
            return Err(Error::Numeric("division by zero".into()));
        }
        Ok(self.scale(a, T::one() / c))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let vb = self.value(b);
        let mut out = self.value(a).clone();
        for (o, &y) in out.data_mut().iter_mut().zip(vb.data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Hadamard(a, b), &[a, b]))
    }

    /// Row-wise `softmax(scale · x)`, shifted by the row maximum.
    pub fn row_softmax(&mut self, x: Var, scale: T) -> Result<Var> {
        let vx = self.value(x);
        if vx.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("NaN input to row_softmax".into()));
        }
        let mut out = vx.map(|v| v * scale);
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        Ok(self.push(out, Op::RowSoftmax(x, scale), &[x]))
    }

    /// Scales each row to unit L2 norm; rows with norm below 1e-12 become
    /// zero and pass no gradient.
    pub fn row_l2_normalize(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let eps = T::of(1e-12);
        let mut out = vx.clone();
        let mut norms = Vec::with_capacity(vx.rows());
        for r in 0..vx.rows() {
            let row = out.row_mut(r);
            let norm = dot(row, row).sqrt();
            if norm > eps {
                for v in row.iter_mut() {
                    *v /= norm;
                }
                norms.push(norm);
            } else {
                row.iter_mut().for_each(|v| *v = T::zero());
                norms.push(T::zero());
            }
        }
        self.push(out, Op::RowL2Normalize(x, norms), &[x])
    }

    /// `ln σ(x)`, evaluated as `-softplus(-x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| -softplus(-v));
        self.push(out, Op::LogSigmoid(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::exp);
        self.push(out, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::ln);
        self.push(out, Op::Log(x), &[x])
    }

    /// Sum of all elements as a 1×1 node.
    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::ReduceSum(x), &[x])
    }

    pub fn gather_rows(&mut self, x: Var, ids: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let (rows, cols) = vx.shape();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "gather_rows",
                    index: id,
                    len: rows,
                });
            }
            data.extend_from_slice(vx.row(id));
        }
        let out = Tensor::from_vec(ids.len(), cols, data)?;
        Ok(self.push(out, Op::GatherRows(x, ids.into()), &[x]))
    }

    /// Identity forward, no gradient backward.
    pub fn stop_gradient(&mut self, x: Var) -> Result<Var> {
        let value = match &self.frozen {
            Some(frozen) => {
                let recorded = frozen.get(self.stopped.len()).ok_or_else(|| {
                    Error::Contract("more stop_gradient calls than recorded values".into())
                })?;
                if recorded.shape() != self.shape(x) {
                    return Err(Error::Dimension {
                        op: "stop_gradient replay",
                        left: recorded.shape(),
                        right: self.shape(x),
                    });
                }
                recorded.clone()
            }
            None => self.value(x).clone(),
        };
        self.stopped.push(value.clone());
        let parents: &[Var] = match self.fault {
            Fault::LeakyStopGradient => &[x],
            Fault::None => &[],
        };
        Ok(self.push(value, Op::StopGradient(x), parents))
    }

    /// Row-wise inner products as an n×1 column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = (0..va.rows()).map(|r| dot(va.row(r), vb.row(r))).collect();
        let out = Tensor::from_vec(va.rows(), 1, data)?;
        Ok(self.push(out, Op::RowDot(a, b), &[a, b]))
    }

    /// Multiplies row `r` of `x` by `w[r]`, where `w` is an n×1 column.
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sw != (sx.0, 1) {
            return Err(Error::Dimension {
                op: "scale_rows",
                left: sx,
                right: sw,
            });
        }
        let vw = self.value(w);
        let mut out = self.value(x).clone();
        for r in 0..sx.0 {
            let s = vw.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::ScaleRows(x, w), &[x, w]))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let rows = xs
            .first()
            .map(|&x| self.shape(x).0)
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        for &x in xs {
            if self.shape(x).0 != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.shape(xs[0]),
                    right: self.shape(x),
                });
            }
        }
        let cols: usize = xs.iter().map(|&x| self.shape(x).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &x in xs {
                let src = self.value(x).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(xs.to_vec()), xs))
    }

    /// Column `j` of `x` as an n×1 node.
    pub fn select_col(&mut self, x: Var, j: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if j >= cols {
            return Err(Error::Index {
                what: "select_col",
                index: j,
                len: cols,
            });
        }
        let vx = self.value(x);
        let data = (0..rows).map(|r| vx.get(r, j)).collect();
        let out = Tensor::from_vec(rows, 1, data)?;
        Ok(self.push(out, Op::SelectCol(x, j), &[x]))
    }

    /// Stable `ln Σ_j exp(x[r, j])` per row, as an n×1 column.
    pub fn row_logsumexp(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.cols() == 0 {
            return Err(Error::Contract("row_logsumexp over zero columns".into()));
        }
        let data = (0..vx.rows()).map(|r| logsumexp(vx.row(r))).collect();
        let out = Tensor::from_vec(vx.rows(), 1, data)?;
        Ok(self.push(out, Op::RowLogSumExp(x), &[x]))
    }

    /// `x[r, cols[r]]` for every row, as an n×1 column.
    pub fn pick_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (rows, ncols) = self.shape(x);
        if cols.len() != rows {
            return Err(Error::Dimension {
                op: "pick_cols",
                left: (rows, ncols),
                right: (cols.len(), 1),
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= ncols) {
            return Err(Error::Index {
                what: "pick_cols",
                index: bad,
                len: ncols,
            });
        }
        let vx = self.value(x);
        let data = cols.iter().enumerate().map(|(r, &c)| vx.get(r, c)).collect();
        let out = Tensor::from_vec(rows, 1, data)?;
        Ok(self.push(out, Op::PickCols(x, cols.into()), &[x]))
    }

    /// Accumulates d`root`/d`leaf` into every leaf that requires a gradient.
    /// Intermediate gradients are recomputed on each call; leaf gradients
    /// accumulate until [`Tape::zero_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        for n in &mut self.nodes[..=root.0] {
            if !matches!(n.op, Op::Leaf) {
                n.grad = None;
            }
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.accumulate(root, Tensor::scalar(T::one()));

        for idx in (0..=root.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) || !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            for (parent, pg) in self.backward_rule(idx, &g)? {
                if self.nodes[parent.0].requires_grad {
                    self.accumulate(parent, pg);
                }
            }
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(existing) => existing.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_rule(&self, idx: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    out.push((*a, tensor::matmul_nt(g, self.value(*b))?));
                }
                if self.needs(*b) {
                    out.push((*b, tensor::matmul_tn(self.value(*a), g)?));
                }
            }
            Op::MatMulTN(a, b) => {
                if self.needs(*a) {
                    out.push((*a, tensor::matmul_nt(self.value(*b), g)?));
                }
                if self.needs(*b) {
                    out.push((*b, tensor::matmul(self.value(*a), g)?));
                }
            }
            Op::MatMulNT(a, b) => {
                if self.needs(*a) {
                    out.push((*a, tensor::matmul(g, self.value(*b))?));
                }
                if self.needs(*b) {
                    out.push((*b, tensor::matmul_tn(g, self.value(*a))?));
                }
            }
            Op::SpMM(op, x) => out.push((*x, op.adjoint.spmm(g)?)),
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::Scale(a, c) => out.push((*a, g.map(|v| v * *c))),
            Op::Hadamard(a, b) => {
                if self.needs(*a) {
                    out.push((*a, elementwise(g, self.value(*b), |x, y| x * y)));
                }
                if self.needs(*b) {
                    out.push((*b, elementwise(g, self.value(*a), |x, y| x * y)));
                }
            }
            Op::RowSoftmax(x, scale) => {
                let y = &node.value;
                let mut gx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner = dot(yr, gr);
                    for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = *scale * yv * (gv - inner);
                    }
                }
                out.push((*x, gx));
            }
            Op::RowL2Normalize(x, norms) => {
                let y = &node.value;
                let mut gx = Tensor::zeros(y.rows(), y.cols());
                for (r, &norm) in norms.iter().enumerate() {
                    if norm == T::zero() {
                        continue;
                    }
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner = dot(yr, gr);
                    for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * inner) / norm;
                    }
                }
                out.push((*x, gx));
            }
            Op::LogSigmoid(x) => {
                // d/dx ln σ(x) = σ(-x)
                let gx = elementwise(g, self.value(*x), |gv, xv| gv * sigmoid(-xv));
                out.push((*x, gx));
            }
            Op::Exp(x) => out.push((*x, elementwise(g, &node.value, |gv, yv| gv * yv))),
            Op::Log(x) => out.push((*x, elementwise(g, self.value(*x), |gv, xv| gv / xv))),
            Op::ReduceSum(x) => {
                let (r, c) = self.shape(*x);
                out.push((*x, Tensor::filled(r, c, g.item())));
            }
            Op::GatherRows(x, ids) => {
                let (r, c) = self.shape(*x);
                let mut gx = Tensor::zeros(r, c);
                for (k, &id) in ids.iter().enumerate() {
                    for (o, &gv) in gx.row_mut(id).iter_mut().zip(g.row(k)) {
                        *o += gv;
                    }
                }
                out.push((*x, gx));
            }
            Op::StopGradient(x) => {
                if self.fault == Fault::LeakyStopGradient {
                    out.push((*x, g.clone()));
                }
            }
            Op::RowDot(a, b) => {
                let col = |other: Var| {
                    let vo = self.value(other);
                    let mut t = vo.clone();
                    for r in 0..t.rows() {
                        let s = g.get(r, 0);
                        t.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    }
                    t
                };
                if self.needs(*a) {
                    out.push((*a, col(*b)));
                }
                if self.needs(*b) {
                    out.push((*b, col(*a)));
                }
            }
            Op::ScaleRows(x, w) => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                if self.needs(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        let s = vw.get(r, 0);
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    }
                    out.push((*x, gx));
                }
                if self.needs(*w) {
                    let data = (0..vx.rows()).map(|r| dot(g.row(r), vx.row(r))).collect();
                    out.push((*w, Tensor::from_vec(vx.rows(), 1, data)?));
                }
            }
            Op::ConcatCols(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let (rows, cols) = self.shape(x);
                    if self.needs(x) {
                        let mut gx = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            gx.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        out.push((x, gx));
                    }
                    offset += cols;
                }
            }
            Op::SelectCol(x, j) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    gx.set(r, *j, g.get(r, 0));
                }
                out.push((*x, gx));
            }
            Op::RowLogSumExp(x) => {
                let vx = self.value(*x);
                let mut gx = vx.clone();
                for r in 0..gx.rows() {
                    let row = gx.row_mut(r);
                    softmax_in_place(row);
                    let s = g.get(r, 0);
                    row.iter_mut().for_each(|v| *v *= s);
                }
                out.push((*x, gx));
            }
            Op::PickCols(x, cols) => {
                let (rows, ncols) = self.shape(*x);
                let mut gx = Tensor::zeros(rows, ncols);
                for (r, &c) in cols.iter().enumerate() {
                    gx.set(r, c, g.get(r, 0));
                }
                out.push((*x, gx));
            }
        }
        Ok(out)
    }
}

fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let mut out = a.clone();
    for (o, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, y);
    }
    out
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn logsumexp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max.is_infinite() {
        return max;
    }
    let total: T = row.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}

#[cfg(test)]
mod tests;
