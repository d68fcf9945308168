//! Reverse-mode computation record.
//!
//! A [`Tape`] borrows a [`ParamStore`] and appends one node per primitive
//! op in execution order, which is a topological order by construction.
//! [`Tape::backward`] walks the nodes once in reverse and accumulates
//! adjoints. Parameter gradients come out as [`ParamGrads`]; tables used
//! only through [`Tape::embedding`] get sparse row gradients.

use crate::error::{Error, Result};

use super::{ParamGrads, ParamId, ParamStore, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<F> {
    Input,
    Constant,
    Param(ParamId),
    ParamRows { param: ParamId, indices: Vec<usize> },
    Gather { table: Var, indices: Vec<usize> },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine { x: Var, scale: F },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Sin(Var),
    Softmax { x: Var },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    RepeatRows(Var),
    SlidingWindow { x: Var, half: usize },
    Sum(Var),
    NegLogSoftmax { x: Var, target: usize },
}

impl<F> Op<F> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::ParamRows { .. } => "embedding_lookup",
            Op::Gather { .. } => "gather",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Affine { .. } => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Sin(_) => "sin",
            Op::Softmax { .. } => "softmax",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::RepeatRows(_) => "repeat_rows",
            Op::SlidingWindow { .. } => "sliding_window_concat",
            Op::Sum(_) => "sum",
            Op::NegLogSoftmax { .. } => "neg_log_softmax",
        }
    }
}

#[derive(Debug)]
struct Node<F> {
    op: Op<F>,
    /// `None` for whole-parameter nodes, whose value lives in the store.
    value: Option<Tensor<F>>,
}

pub struct Tape<'p, F: Real> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
}

/// Result of [`Tape::backward`].
pub struct Gradients<F> {
    nodes: Vec<Option<Tensor<F>>>,
    shapes: Vec<[usize; 2]>,
    pub params: ParamGrads<F>,
}

impl<F: Real> Gradients<F> {
    /// Adjoint of `var`; zeros when `var` is not on any path to the loss.
    pub fn wrt(&self, var: Var) -> Tensor<F> {
        match &self.nodes[var.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn into_params(self) -> ParamGrads<F> {
        self.params
    }
}

fn check_same(op: &'static str, a: &Tensor<impl Real>, b: &Tensor<impl Real>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl<'p, F: Real> Tape<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Name of the most recently recorded op.
    pub fn last_op(&self) -> &'static str {
        self.nodes.last().map_or("none", |n| n.op.name())
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf not backed by a parameter.
    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.push(Op::Input, t)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(Op::Constant, t)
    }

    pub fn scalar_const(&mut self, v: F) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Rows `indices` of a parameter table; gradient is row-sparse.
    pub fn embedding(&mut self, table: ParamId, indices: &[usize]) -> Result<Var> {
        let t = self.params.get(table);
        let out = gather_rows(t, indices, "embedding_lookup")?;
        Ok(self.push(
            Op::ParamRows {
                param: table,
                indices: indices.to_vec(),
            },
            out,
        ))
    }

    /// Rows `indices` of an arbitrary node.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let out = gather_rows(self.value(table), indices, "gather")?;
        Ok(self.push(
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            out,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(Op::Transpose(x), out)
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same(op, ta, tb)?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// `x (m x n) + row (1 x n)` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.rows() != 1 || tr.cols() != tx.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", tx.shape(), tr.shape()),
            ));
        }
        let mut out = tx.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_slice_mut(r).iter_mut().zip(tr.data()) {
                *o = *o + b;
            }
        }
        Ok(self.push(Op::AddRow(x, row), out))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine_scalar(&mut self, x: Var, scale: F, shift: F) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(Op::Affine { x, scale }, out)
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        self.affine_scalar(x, s, F::zero())
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine_scalar(x, -F::one(), F::one())
    }

    /// Dense layer `x @ w + b`.
    pub fn dense(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = self.param(w);
        let b = self.param(b);
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(F::tanh);
        self.push(Op::Tanh(x), out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(F::zero()));
        self.push(Op::Relu(x), out)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(F::exp);
        self.push(Op::Exp(x), out)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        let out = self.value(x).map(F::sin);
        self.push(Op::Sin(x), out)
    }

    /// Row-wise softmax. `mask[c] == false` excludes column `c`
    /// (probability exactly 0); rows with every column masked become zeros.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let tx = self.value(x);
        if let Some(m) = mask {
            if m.len() != tx.cols() {
                return Err(Error::shape(
                    "softmax",
                    format!("mask of {} for {} columns", m.len(), tx.cols()),
                ));
            }
        }
        let mut out = Tensor::zeros(tx.rows(), tx.cols());
        for r in 0..tx.rows() {
            softmax_into(tx.row_slice(r), mask, out.row_slice_mut(r));
        }
        Ok(self.push(Op::Softmax { x }, out))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.value(p).shape()).collect();
            return Err(Error::shape("concat_cols", format!("{shapes:?}")));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.value(p).shape()).collect();
            return Err(Error::shape("concat_rows", format!("{shapes:?}")));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), out))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {:?}", start + len, tx.shape()),
            ));
        }
        let mut data = Vec::with_capacity(tx.rows() * len);
        for r in 0..tx.rows() {
            data.extend_from_slice(&tx.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(tx.rows(), len, data)?;
        Ok(self.push(Op::SliceCols { x, start }, out))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("[{start}, {}) of {:?}", start + len, tx.shape()),
            ));
        }
        let c = tx.cols();
        let out = Tensor::new(len, c, tx.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(Op::SliceRows { x, start }, out))
    }

    /// Stacks `n` copies of a `1 x d` row.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rows() != 1 {
            return Err(Error::shape("repeat_rows", format!("{:?}", tx.shape())));
        }
        let data = tx.data().repeat(n);
        let out = Tensor::new(n, tx.cols(), data)?;
        Ok(self.push(Op::RepeatRows(x), out))
    }

    /// Row `i` of the output is `[x[i-h]; ...; x[i]; ...; x[i+h]]`, with
    /// zero rows past either end. Output is `m x (2h+1)d`.
    pub fn sliding_window_concat(&mut self, x: Var, half: usize) -> Var {
        let tx = self.value(x);
        let (m, d) = (tx.rows(), tx.cols());
        let width = 2 * half + 1;
        let mut out = Tensor::zeros(m, width * d);
        for i in 0..m {
            for w in 0..width {
                let src = i as isize + w as isize - half as isize;
                if src < 0 || src >= m as isize {
                    continue;
                }
                let src = src as usize;
                out.row_slice_mut(i)[w * d..(w + 1) * d].copy_from_slice(tx.row_slice(src));
            }
        }
        self.push(Op::SlidingWindow { x, half }, out)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), out)
    }

    /// `-log softmax(x)[target]` for a `1 x n` row, computed with
    /// max-subtraction. Output is a `1 x 1` scalar.
    pub fn neg_log_softmax(&mut self, x: Var, target: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rows() != 1 || target >= tx.cols() {
            return Err(Error::shape(
                "neg_log_softmax",
                format!("target {target} for {:?}", tx.shape()),
            ));
        }
        let loss = neg_log_softmax(tx.data(), target);
        Ok(self.push(Op::NegLogSoftmax { x, target }, Tensor::scalar(loss)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let lv = self.value(loss);
        if lv.rows() != 1 || lv.cols() != 1 {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params = ParamGrads::new(self.params);
        grads[loss.0] = Some(Tensor::scalar(F::one()));

        for idx in (0..=loss.0).rev() {
            let (before, rest) = grads.split_at_mut(idx);
            let Some(g) = rest[0].as_ref() else { continue };
            let node = &self.nodes[idx];
            let y = self.value(Var(idx));
            match &node.op {
                Op::Input | Op::Constant => {}
                Op::Param(id) => params.accumulate_dense(*id, g),
                Op::ParamRows { param, indices } => {
                    for (r, &i) in indices.iter().enumerate() {
                        params.accumulate_row(*param, i, g.row_slice(r));
                    }
                }
                Op::Gather { table, indices } => {
                    let t = self.value(*table);
                    let mut gt = Tensor::zeros(t.rows(), t.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        for (a, &b) in gt.row_slice_mut(i).iter_mut().zip(g.row_slice(r)) {
                            *a = *a + b;
                        }
                    }
                    accumulate(before, *table, gt);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = g.matmul(&tb.transpose())?;
                    let gb = ta.transpose().matmul(g)?;
                    accumulate(before, *a, ga);
                    accumulate(before, *b, gb);
                }
                Op::Transpose(x) => accumulate(before, *x, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(before, *a, g.clone());
                    accumulate(before, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(before, *b, g.map(|v| -v));
                    accumulate(before, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = zip_map(g, tb, |gv, bv| gv * bv);
                    let gb = zip_map(g, ta, |gv, av| gv * av);
                    accumulate(before, *a, ga);
                    accumulate(before, *b, gb);
                }
                Op::AddRow(x, row) => {
                    let mut gr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (a, &b) in gr.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *a = *a + b;
                        }
                    }
                    accumulate(before, *row, gr);
                    accumulate(before, *x, g.clone());
                }
                Op::Affine { x, scale } => {
                    let s = *scale;
                    accumulate(before, *x, g.map(|v| v * s));
                }
                Op::Sigmoid(x) => {
                    let gx = zip_map(g, y, |gv, yv| gv * yv * (F::one() - yv));
                    accumulate(before, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = zip_map(g, y, |gv, yv| gv * (F::one() - yv * yv));
                    accumulate(before, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = zip_map(g, y, |gv, yv| if yv > F::zero() { gv } else { F::zero() });
                    accumulate(before, *x, gx);
                }
                Op::Exp(x) => {
                    let gx = zip_map(g, y, |gv, yv| gv * yv);
                    accumulate(before, *x, gx);
                }
                Op::Sin(x) => {
                    let tx = self.value(*x);
                    let gx = zip_map(g, tx, |gv, xv| gv * xv.cos());
                    accumulate(before, *x, gx);
                }
                Op::Softmax { x } => {
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for (c, o) in gx.row_slice_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(before, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut gp = Tensor::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            gp.row_slice_mut(r)
                                .copy_from_slice(&g.row_slice(r)[offset..offset + c]);
                        }
                        offset += c;
                        accumulate(before, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = (self.value(p).rows(), self.value(p).cols());
                        let gp = Tensor::new(r, c, g.data()[offset..offset + r * c].to_vec())?;
                        offset += r * c;
                        accumulate(before, p, gp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let tx = self.value(*x);
                    let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                    for r in 0..g.rows() {
                        gx.row_slice_mut(r)[*start..*start + g.cols()]
                            .copy_from_slice(g.row_slice(r));
                    }
                    accumulate(before, *x, gx);
                }
                Op::SliceRows { x, start } => {
                    let tx = self.value(*x);
                    let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                    let c = tx.cols();
                    gx.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    accumulate(before, *x, gx);
                }
                Op::RepeatRows(x) => {
                    let mut gx = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (a, &b) in gx.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *a = *a + b;
                        }
                    }
                    accumulate(before, *x, gx);
                }
                Op::SlidingWindow { x, half } => {
                    let tx = self.value(*x);
                    let (m, d) = (tx.rows(), tx.cols());
                    let mut gx = Tensor::zeros(m, d);
                    for i in 0..m {
                        for w in 0..2 * half + 1 {
                            let src = i as isize + w as isize - *half as isize;
                            if src < 0 || src >= m as isize {
                                continue;
                            }
                            let gsrc = &g.row_slice(i)[w * d..(w + 1) * d];
                            for (a, &b) in gx.row_slice_mut(src as usize).iter_mut().zip(gsrc) {
                                *a = *a + b;
                            }
                        }
                    }
                    accumulate(before, *x, gx);
                }
                Op::Sum(x) => {
                    let tx = self.value(*x);
                    accumulate(before, *x, Tensor::filled(tx.rows(), tx.cols(), g.item()));
                }
                Op::NegLogSoftmax { x, target } => {
                    let tx = self.value(*x);
                    let mut p = vec![F::zero(); tx.cols()];
                    softmax_into(tx.data(), None, &mut p);
                    p[*target] = p[*target] - F::one();
                    let gv = g.item();
                    let gx = Tensor::row(p.into_iter().map(|v| v * gv).collect());
                    accumulate(before, *x, gx);
                }
            }
        }

        let shapes = (0..self.nodes.len())
            .map(|i| self.value(Var(i)).shape())
            .collect();
        Ok(Gradients {
            nodes: grads,
            shapes,
            params,
        })
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Tensor<F>>], v: Var, g: Tensor<F>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

fn gather_rows<F: Real>(t: &Tensor<F>, indices: &[usize], what: &'static str) -> Result<Tensor<F>> {
    let mut data = Vec::with_capacity(indices.len() * t.cols());
    for &i in indices {
        if i >= t.rows() {
            return Err(Error::OutOfRange {
                what,
                index: i,
                len: t.rows(),
            });
        }
        data.extend_from_slice(t.row_slice(i));
    }
    Tensor::new(indices.len(), t.cols(), data)
}

pub fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

/// Masked, max-shifted softmax of one row. Masked entries and fully
/// masked rows produce zeros.
pub fn softmax_into<F: Real>(x: &[F], mask: Option<&[bool]>, out: &mut [F]) {
    let keep = |i: usize| mask.map_or(true, |m| m[i]);
    let max = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, &v)| v)
        .fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        out.iter_mut().for_each(|o| *o = F::zero());
        return;
    }
    let mut total = F::zero();
    for (i, o) in out.iter_mut().enumerate() {
        *o = if keep(i) { (x[i] - max).exp() } else { F::zero() };
        total = total + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / total);
}

pub fn neg_log_softmax<F: Real>(x: &[F], target: usize) -> F {
    let max = x.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = x.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
    lse - x[target]
}
