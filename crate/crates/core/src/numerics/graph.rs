//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its output value and whatever it needs for
//! the backward pass. Nodes are appended in evaluation order, so the tape is
//! topologically sorted by construction and `backward` is a single reverse
//! sweep.

use std::sync::Arc;

use super::sparse::CsrMatrix;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`ComputeGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Matmul(Var, Var),
    MatmulNt(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    LogSoftmax(Var),
    Softmax(Var),
    SpMM(Arc<CsrMatrix>, Var),
    SegmentMean(Var, Vec<Vec<usize>>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    SoftCrossEntropy {
        log_q: Var,
        target: Vec<f64>,
        rows: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct ComputeGraph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Result of a backward pass: `d loss / d leaf` for every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of leaf `v` into `t`'s gradient slot.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`
fn matmul_nt_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[k×m]ᵀ · b[k×n]`
fn matmul_tn_raw(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn log_softmax_raw(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Shape {
            op,
            lhs: s.to_vec(),
            rhs: vec![],
        }),
    }
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
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

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, op_name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name));
        }
        let needs_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::Matmul(a, b)
            | Op::MatmulNt(a, b)
            | Op::AddRowBias(a, b)
            | Op::Add(a, b)
            | Op::Mul(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::LogSoftmax(a)
            | Op::Softmax(a)
            | Op::SpMM(_, a)
            | Op::SegmentMean(a, _)
            | Op::MeanRows(a) => self.needs(*a),
            Op::ConcatRows(parts) => parts.iter().any(|p| self.needs(*p)),
            Op::SoftCrossEntropy { log_q, .. } => self.needs(*log_q),
        };
        // Ops that nothing will differentiate through keep only their value.
        let op = if needs_grad || matches!(op, Op::Leaf) {
            op
        } else {
            Op::Constant
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a copy of `t` as a leaf. The leaf is trainable iff
    /// `t.requires_grad()`.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().to_vec());
        let op = if t.requires_grad() {
            Op::Leaf
        } else {
            Op::Constant
        };
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a non-trainable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t.with_requires_grad(false),
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a), "matmul")?;
        let (k2, n) = matrix_dims(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::from_parts(vec![m, n], out), Op::Matmul(a, b), "matmul")
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a), "matmul_nt")?;
        let (n, k2) = matrix_dims(self.value(b), "matmul_nt")?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul_nt",
                lhs: vec![m, k],
                rhs: vec![n, k2],
            });
        }
        let out = matmul_nt_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatmulNt(a, b),
            "matmul_nt",
        )
    }

    /// Adds a `[1×n]` row vector to every row of an `[m×n]` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(x), "add_row_bias")?;
        let bshape = self.value(bias).shape().to_vec();
        if bshape != [1, n] {
            return Err(Error::Shape {
                op: "add_row_bias",
                lhs: vec![m, n],
                rhs: bshape,
            });
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(b).for_each(|(o, v)| *o += v);
        }
        self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::AddRowBias(x, bias),
            "add_row_bias",
        )
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape {
                op,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Add(a, b), "add")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).data().iter().map(|x| x * s).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Scale(a, s), "scale")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).data().iter().map(|x| x.max(0.0)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Relu(a), "relu")
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum")
    }

    /// Row-wise `x - logsumexp(x)`, stabilized by max subtraction.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, c) = matrix_dims(self.value(x), "log_softmax_rows")?;
        let out = log_softmax_raw(self.value(x).data(), m, c);
        self.push(
            Tensor::from_parts(vec![m, c], out),
            Op::LogSoftmax(x),
            "log_softmax_rows",
        )
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, c) = matrix_dims(self.value(x), "softmax_rows")?;
        let out = log_softmax_raw(self.value(x).data(), m, c)
            .into_iter()
            .map(f64::exp)
            .collect();
        self.push(
            Tensor::from_parts(vec![m, c], out),
            Op::Softmax(x),
            "softmax_rows",
        )
    }

    /// Sparse-dense product `adj · x`; `adj` is treated as a constant.
    pub fn spmm(&mut self, adj: Arc<CsrMatrix>, x: Var) -> Result<Var> {
        let (m, c) = matrix_dims(self.value(x), "spmm")?;
        if adj.n_cols() != m {
            return Err(Error::Shape {
                op: "spmm",
                lhs: vec![adj.n_rows(), adj.n_cols()],
                rhs: vec![m, c],
            });
        }
        let out = adj.mul_dense(self.value(x).data(), c);
        let rows = adj.n_rows();
        self.push(Tensor::from_parts(vec![rows, c], out), Op::SpMM(adj, x), "spmm")
    }

    /// Row `g` of the output is the mean of rows `groups[g]` of `x`.
    /// Indices may repeat; this doubles as an embedding-bag lookup.
    pub fn segment_mean(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let (m, c) = matrix_dims(self.value(x), "segment_mean")?;
        let src = self.value(x).data();
        let mut out = vec![0.0; groups.len() * c];
        for (gi, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Invalid(format!("segment_mean: group {gi} is empty")));
            }
            let dst = &mut out[gi * c..(gi + 1) * c];
            for &i in group {
                if i >= m {
                    return Err(Error::Invalid(format!(
                        "segment_mean: row {i} out of range for {m} rows"
                    )));
                }
                dst.iter_mut()
                    .zip(&src[i * c..(i + 1) * c])
                    .for_each(|(d, s)| *d += s);
            }
            let inv = 1.0 / group.len() as f64;
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let n = groups.len();
        self.push(
            Tensor::from_parts(vec![n, c], out),
            Op::SegmentMean(x, groups),
            "segment_mean",
        )
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Invalid("concat_rows of nothing".into()))?;
        let (_, c) = matrix_dims(self.value(first), "concat_rows")?;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let (r, pc) = matrix_dims(self.value(p), "concat_rows")?;
            if pc != c {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: vec![rows, c],
                    rhs: vec![r, pc],
                });
            }
            out.extend_from_slice(self.value(p).data());
            rows += r;
        }
        self.push(
            Tensor::from_parts(vec![rows, c], out),
            Op::ConcatRows(parts),
            "concat_rows",
        )
    }

    /// Column means of an `[m×c]` matrix as a `[1×c]` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (m, c) = matrix_dims(self.value(x), "mean_rows")?;
        if m == 0 {
            return Err(Error::Invalid("mean_rows of zero rows".into()));
        }
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        self.push(Tensor::from_parts(vec![1, c], out), Op::MeanRows(x), "mean_rows")
    }

    /// Mean over `rows` of `-Σ_c target[r][c] · log_q[r][c]`.
    ///
    /// `target` has the same shape as `log_q`; only the masked rows are read
    /// and each must sum to one within 1e-6.
    pub fn soft_cross_entropy(&mut self, log_q: Var, target: &Tensor, rows: &[usize]) -> Result<Var> {
        let (m, c) = matrix_dims(self.value(log_q), "soft_cross_entropy")?;
        if target.shape() != [m, c] {
            return Err(Error::Shape {
                op: "soft_cross_entropy",
                lhs: vec![m, c],
                rhs: target.shape().to_vec(),
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut kept = Vec::with_capacity(rows.len() * c);
        let mut total = 0.0;
        for &r in rows {
            if r >= m {
                return Err(Error::Invalid(format!("loss mask row {r} out of range")));
            }
            let t = target.row(r);
            let s: f64 = t.iter().sum();
            if (s - 1.0).abs() > 1e-6 || t.iter().any(|&p| p < 0.0) {
                return Err(Error::Normalization { row: r, sum: s });
            }
            let lq = self.value(log_q).row(r);
            total -= t
                .iter()
                .zip(lq)
                .filter(|(p, _)| **p != 0.0)
                .map(|(p, l)| p * l)
                .sum::<f64>();
            kept.extend_from_slice(t);
        }
        let value = total / rows.len() as f64;
        self.push(
            Tensor::scalar(value),
            Op::SoftCrossEntropy {
                log_q,
                target: kept,
                rows: rows.to_vec(),
            },
            "soft_cross_entropy",
        )
    }

    /// Reverse sweep from a scalar `loss`. Consumes the graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        if !self.needs(loss) {
            return Err(Error::DetachedLoss);
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Constant => {}
                Op::Matmul(a, b) => {
                    let (m, k) = matrix_dims(self.value(*a), "matmul")?;
                    let n = self.value(*b).cols();
                    if self.needs(*a) {
                        let da = matmul_nt_raw(&g, self.value(*b).data(), m, n, k);
                        add_into(&mut grads[a.0], &da);
                    }
                    if self.needs(*b) {
                        let db = matmul_tn_raw(self.value(*a).data(), &g, m, k, n);
                        add_into(&mut grads[b.0], &db);
                    }
                }
                Op::MatmulNt(a, b) => {
                    let (m, k) = matrix_dims(self.value(*a), "matmul_nt")?;
                    let n = self.value(*b).rows();
                    if self.needs(*a) {
                        let da = matmul_raw(&g, self.value(*b).data(), m, n, k);
                        add_into(&mut grads[a.0], &da);
                    }
                    if self.needs(*b) {
                        let db = matmul_tn_raw(&g, self.value(*a).data(), m, n, k);
                        add_into(&mut grads[b.0], &db);
                    }
                }
                Op::AddRowBias(x, b) => {
                    if self.needs(*b) {
                        let n = self.value(*b).len();
                        let mut db = vec![0.0; n];
                        for row in g.chunks(n) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                        add_into(&mut grads[b.0], &db);
                    }
                    if self.needs(*x) {
                        add_into(&mut grads[x.0], &g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        add_into(&mut grads[a.0], &g);
                    }
                    if self.needs(*b) {
                        add_into(&mut grads[b.0], &g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let da: Vec<f64> = g
                            .iter()
                            .zip(self.value(*b).data())
                            .map(|(g, y)| g * y)
                            .collect();
                        add_into(&mut grads[a.0], &da);
                    }
                    if self.needs(*b) {
                        let db: Vec<f64> = g
                            .iter()
                            .zip(self.value(*a).data())
                            .map(|(g, x)| g * x)
                            .collect();
                        add_into(&mut grads[b.0], &db);
                    }
                }
                Op::Scale(a, s) => {
                    let da: Vec<f64> = g.iter().map(|v| v * s).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::Sum(a) => {
                    let da = vec![g[0]; self.value(*a).len()];
                    add_into(&mut grads[a.0], &da);
                }
                Op::LogSoftmax(a) => {
                    let c = node.value.cols();
                    let mut da = vec![0.0; g.len()];
                    for ((drow, grow), yrow) in da
                        .chunks_mut(c)
                        .zip(g.chunks(c))
                        .zip(node.value.data().chunks(c))
                    {
                        let gs: f64 = grow.iter().sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d = gv - y.exp() * gs;
                        }
                    }
                    add_into(&mut grads[a.0], &da);
                }
                Op::Softmax(a) => {
                    let c = node.value.cols();
                    let mut da = vec![0.0; g.len()];
                    for ((drow, grow), yrow) in da
                        .chunks_mut(c)
                        .zip(g.chunks(c))
                        .zip(node.value.data().chunks(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d = y * (gv - dot);
                        }
                    }
                    add_into(&mut grads[a.0], &da);
                }
                Op::SpMM(adj, x) => {
                    let c = node.value.cols();
                    let dx = adj.mul_dense_transposed(&g, c);
                    add_into(&mut grads[x.0], &dx);
                }
                Op::SegmentMean(x, groups) => {
                    let c = node.value.cols();
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for (gi, group) in groups.iter().enumerate() {
                        let inv = 1.0 / group.len() as f64;
                        let src = &g[gi * c..(gi + 1) * c];
                        for &r in group {
                            dx[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, s)| *d += s * inv);
                        }
                    }
                    add_into(&mut grads[x.0], &dx);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        if self.needs(*p) {
                            add_into(&mut grads[p.0], &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::MeanRows(x) => {
                    let (m, c) = matrix_dims(self.value(*x), "mean_rows")?;
                    let inv = 1.0 / m as f64;
                    let mut dx = vec![0.0; m * c];
                    for row in dx.chunks_mut(c) {
                        row.iter_mut().zip(&g).for_each(|(d, s)| *d = s * inv);
                    }
                    add_into(&mut grads[x.0], &dx);
                }
                Op::SoftCrossEntropy {
                    log_q,
                    target,
                    rows,
                } => {
                    let c = self.value(*log_q).cols();
                    let scale = -g[0] / rows.len() as f64;
                    let mut dq = vec![0.0; self.value(*log_q).len()];
                    for (k, &r) in rows.iter().enumerate() {
                        let t = &target[k * c..(k + 1) * c];
                        dq[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(t)
                            .for_each(|(d, p)| *d += scale * p);
                    }
                    add_into(&mut grads[log_q.0], &dq);
                }
            }
        }

        // Trainable leaves that the loss does not touch get explicit zeros.
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            } else if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

/// Free-standing row-wise log-softmax on a plain tensor.
pub fn log_softmax_rows(x: &Tensor) -> Result<Tensor> {
    let mut g = ComputeGraph::new();
    let v = g.constant(x.clone());
    let out = g.log_softmax_rows(v)?;
    Ok(g.value(out).clone())
}

/// Plain dense product, no recording.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = ComputeGraph::new();
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let out = g.matmul(va, vb)?;
    Ok(g.value(out).clone())
}
