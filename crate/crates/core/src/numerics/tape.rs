//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] borrows a [`ParamStore`] and records every operation applied
//! to [`Var`] handles. Nodes are appended in evaluation order, so a single
//! reverse sweep from the loss visits each node exactly once after all of its
//! consumers.

use std::sync::Arc;

use super::tensor::{shape_error, softmax_in_place, Real, Tensor};
use crate::crf::{self, EmissionScores, TransitionMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct ParamEntry<R> {
    pub name: String,
    pub value: Tensor<R>,
    pub trainable: bool,
}

/// Named trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<R> {
    entries: Vec<ParamEntry<R>>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.entries.push(ParamEntry {
            name,
            value,
            trainable: true,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry<R>] {
        &self.entries
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.all_finite())
    }
}

/// Per-parameter gradients, aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<R> {
    pub grads: Vec<Tensor<R>>,
}

impl<R: Real> Gradients<R> {
    pub fn zeros_like(store: &ParamStore<R>) -> Self {
        Gradients {
            grads: store.entries.iter().map(|e| Tensor::zeros(e.value.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.grads[id.0]
    }

    pub fn accumulate(&mut self, other: &Gradients<R>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: R) {
        for g in &mut self.grads {
            g.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> R {
        self.grads.iter().map(|g| g.squared_norm()).sum::<R>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: R) -> R {
        let norm = self.global_norm();
        if norm > max_norm && norm > R::zero() {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<R> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSumExp(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Transpose(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Row(Var, usize),
    GatherRows(Var, Vec<usize>),
    GatherSumRows(Var, Vec<Vec<usize>>),
    Sum(Var),
    SumSquares(Var),
    Crf {
        emissions: Var,
        transitions: Var,
        grad_e: Tensor<R>,
        grad_a: Tensor<R>,
    },
    SoftmaxXent {
        logits: Var,
        probs: Tensor<R>,
        gold: Vec<usize>,
    },
}

struct Node<R> {
    value: Option<Tensor<R>>,
    op: Op<R>,
}

pub struct Tape<'a, R: Real> {
    store: &'a ParamStore<R>,
    nodes: Vec<Node<R>>,
    param_vars: Vec<Option<Var>>,
}

impl<'a, R: Real> Tape<'a, R> {
    pub fn new(store: &'a ParamStore<R>) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &ParamStore<R> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.get(*id),
            _ => self.nodes[v.0].value.as_ref().unwrap(),
        }
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<R>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Elementwise sum; a `1×n` right operand is broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let broadcast = va.shape() != vb.shape() && vb.rows() == 1 && va.cols() == vb.cols();
        let out = va.add(vb)?;
        Ok(self.push(out, if broadcast { Op::AddRow(a, b) } else { Op::Add(a, b) }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: R) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).tanh();
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).sigmoid();
        self.push(out, Op::Sigmoid(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax();
        self.push(out, Op::Softmax(a))
    }

    /// Row-wise log-sum-exp, producing an `r×1` column.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let out = self.value(a).log_sum_exp();
        self.push(out, Op::LogSumExp(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<R>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&vals)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts.first().map_or(0, |&r| self.value(r).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &r in parts {
            let v = self.value(r);
            if v.cols() != n {
                return Err(shape_error("stack_rows", self.value(parts[0]), v));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::matrix(rows, n, data)?;
        Ok(self.push(out, Op::StackRows(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        if start > end || end > v.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                left: v.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let rows = v.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        let out = Tensor::matrix(rows, end - start, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Rows `[start, end)` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        if start > end || end > v.rows() {
            return Err(Error::Shape {
                op: "slice_rows",
                left: v.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let n = v.cols();
        let out = Tensor::matrix(end - start, n, v.data()[start * n..end * n].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    /// Row `i` of a matrix, as `1×n`.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = self.value(a);
        if i >= v.rows() {
            return Err(Error::Shape {
                op: "row",
                left: v.shape().to_vec(),
                right: vec![i],
            });
        }
        let out = Tensor::row(v.row_slice(i).to_vec());
        Ok(self.push(out, Op::Row(a, i)))
    }

    /// Embedding lookup: rows `ids` of `a`, stacked.
    pub fn gather_rows(&mut self, a: Var, ids: &[usize]) -> Result<Var> {
        let v = self.value(a);
        let n = v.cols();
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            if i >= v.rows() {
                return Err(Error::Shape {
                    op: "gather_rows",
                    left: v.shape().to_vec(),
                    right: vec![i],
                });
            }
            data.extend_from_slice(v.row_slice(i));
        }
        let out = Tensor::matrix(ids.len(), n, data)?;
        Ok(self.push(out, Op::GatherRows(a, ids.to_vec())))
    }

    /// Output row `t` is the sum of rows `ids[t]` of `a` (sparse features).
    pub fn gather_sum_rows(&mut self, a: Var, ids: Vec<Vec<usize>>) -> Result<Var> {
        let v = self.value(a);
        let n = v.cols();
        let mut out = Tensor::zeros(&[ids.len(), n]);
        for (t, row_ids) in ids.iter().enumerate() {
            for &i in row_ids {
                if i >= v.rows() {
                    return Err(Error::Shape {
                        op: "gather_sum_rows",
                        left: v.shape().to_vec(),
                        right: vec![i],
                    });
                }
                let src = v.row_slice(i);
                for (o, s) in out.data_mut()[t * n..(t + 1) * n].iter_mut().zip(src) {
                    *o += *s;
                }
            }
        }
        Ok(self.push(out, Op::GatherSumRows(a, ids)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).squared_norm());
        self.push(out, Op::SumSquares(a))
    }

    /// Negative log-likelihood of `gold` under a linear-chain CRF.
    pub fn crf_nll(
        &mut self,
        emissions: Var,
        transitions: Var,
        gold: &[usize],
        allowed: Option<Arc<Vec<bool>>>,
    ) -> Result<Var> {
        let ev = self.value(emissions);
        let av = self.value(transitions);
        let k = ev.cols();
        if av.shape() != [k + 2, k + 2] {
            return Err(shape_error("crf_nll", ev, av));
        }
        let e = EmissionScores::new(ev.rows(), k, ev.data().iter().map(|v| v.to_f64_lossy()).collect())?;
        let mut a = TransitionMatrix::from_values(k, av.data().iter().map(|v| v.to_f64_lossy()).collect())?;
        if let Some(mask) = allowed {
            a = a.with_allowed(mask)?;
        }
        let (nll, ge, ga) = crf::nll_with_gradients(&e, &a, gold)?;
        let grad_e = Tensor::from_f64(ev.shape(), &ge)?;
        let grad_a = Tensor::from_f64(av.shape(), &ga)?;
        Ok(self.push(
            Tensor::scalar(R::from_f64_lossy(nll)),
            Op::Crf {
                emissions,
                transitions,
                grad_e,
                grad_a,
            },
        ))
    }

    /// Summed per-row cross-entropy of softmax(`logits`) against `gold`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, gold: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        if v.rows() != gold.len() || gold.iter().any(|&g| g >= v.cols()) {
            return Err(Error::Length {
                what: "gold labels",
                got: gold.len(),
                expected: v.rows(),
            });
        }
        let probs = v.softmax();
        let loss: R = gold
            .iter()
            .enumerate()
            .map(|(r, &g)| -probs.get(r, g).max(R::min_positive_value()).ln())
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                probs,
                gold: gold.to_vec(),
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients<R>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<R>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), R::one()));
        let mut out = Gradients::zeros_like(self.store);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = |v: Var| self.value(v);
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    let ga = slot(&mut grads, *a, va.shape());
                    R::gemm(m, n, k, R::one(), g.data(), false, vb.data(), true, R::one(), ga.data_mut());
                    let gb = slot(&mut grads, *b, vb.shape());
                    R::gemm(k, m, n, R::one(), va.data(), true, g.data(), false, R::one(), gb.data_mut());
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    slot(&mut grads, *b, g.shape()).add_assign(&g);
                }
                Op::AddRow(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    let n = g.cols();
                    let gb = slot(&mut grads, *b, &[1, n]);
                    for row in g.data().chunks(n) {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += *v;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    let gb = slot(&mut grads, *b, g.shape());
                    for (o, v) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= *v;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    accumulate_with(slot(&mut grads, *a, g.shape()), &g, vb, |g, o| g * o);
                    accumulate_with(slot(&mut grads, *b, g.shape()), &g, va, |g, o| g * o);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    let ga = slot(&mut grads, *a, g.shape());
                    for (o, v) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += *v * s;
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    accumulate_with(slot(&mut grads, *a, g.shape()), &g, y, |g, y| g * (R::one() - y * y));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    accumulate_with(slot(&mut grads, *a, g.shape()), &g, y, |g, y| g * y * (R::one() - y));
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let n = y.cols();
                    let ga = slot(&mut grads, *a, g.shape());
                    for ((grow, yrow), orow) in g.data().chunks(n).zip(y.data().chunks(n)).zip(ga.data_mut().chunks_mut(n)) {
                        let dot: R = grow.iter().zip(yrow).map(|(g, y)| *g * *y).sum();
                        for ((o, g), y) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += *y * (*g - dot);
                        }
                    }
                }
                Op::LogSumExp(a) => {
                    let x = val(*a);
                    let mut p = x.clone();
                    let n = x.cols();
                    for row in p.data_mut().chunks_mut(n) {
                        softmax_in_place(row);
                    }
                    let ga = slot(&mut grads, *a, x.shape());
                    for (r, (orow, prow)) in ga.data_mut().chunks_mut(n).zip(p.data().chunks(n)).enumerate() {
                        let gr = g.data()[r];
                        for (o, p) in orow.iter_mut().zip(prow) {
                            *o += gr * *p;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let shape = val(p).shape().to_vec();
                        let w = val(p).cols();
                        let gp = slot(&mut grads, p, &shape);
                        for r in 0..rows {
                            let src = &g.row_slice(r)[offset..offset + w];
                            for (o, v) in gp.data_mut()[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *o += *v;
                            }
                        }
                        offset += w;
                    }
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = val(p).shape().to_vec();
                        let len = val(p).len();
                        let gp = slot(&mut grads, p, &shape);
                        for (o, v) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *o += *v;
                        }
                        offset += len;
                    }
                }
                Op::Transpose(a) => {
                    let shape = val(*a).shape().to_vec();
                    slot(&mut grads, *a, &shape).add_assign(&g.transpose());
                }
                Op::SliceCols(a, start) => {
                    let shape = val(*a).shape().to_vec();
                    let cols = val(*a).cols();
                    let w = g.cols();
                    let ga = slot(&mut grads, *a, &shape);
                    for r in 0..g.rows() {
                        let dst = &mut ga.data_mut()[r * cols + start..r * cols + start + w];
                        for (o, v) in dst.iter_mut().zip(g.row_slice(r)) {
                            *o += *v;
                        }
                    }
                }
                Op::SliceRows(a, start) => {
                    let shape = val(*a).shape().to_vec();
                    let off = start * g.cols();
                    let ga = slot(&mut grads, *a, &shape);
                    for (o, v) in ga.data_mut()[off..off + g.len()].iter_mut().zip(g.data()) {
                        *o += *v;
                    }
                }
                Op::Row(a, i) => {
                    let shape = val(*a).shape().to_vec();
                    let cols = val(*a).cols();
                    let ga = slot(&mut grads, *a, &shape);
                    for (o, v) in ga.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(g.data()) {
                        *o += *v;
                    }
                }
                Op::GatherRows(a, ids) => {
                    let shape = val(*a).shape().to_vec();
                    let n = g.cols();
                    let ga = slot(&mut grads, *a, &shape);
                    for (t, &i) in ids.iter().enumerate() {
                        for (o, v) in ga.data_mut()[i * n..(i + 1) * n].iter_mut().zip(g.row_slice(t)) {
                            *o += *v;
                        }
                    }
                }
                Op::GatherSumRows(a, ids) => {
                    let shape = val(*a).shape().to_vec();
                    let n = g.cols();
                    let ga = slot(&mut grads, *a, &shape);
                    for (t, row_ids) in ids.iter().enumerate() {
                        for &i in row_ids {
                            for (o, v) in ga.data_mut()[i * n..(i + 1) * n].iter_mut().zip(g.row_slice(t)) {
                                *o += *v;
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    let s = g.scalar_value();
                    let shape = val(*a).shape().to_vec();
                    for o in slot(&mut grads, *a, &shape).data_mut() {
                        *o += s;
                    }
                }
                Op::SumSquares(a) => {
                    let s = g.scalar_value();
                    let x = val(*a);
                    let two = R::one() + R::one();
                    let ga = slot(&mut grads, *a, x.shape());
                    for (o, v) in ga.data_mut().iter_mut().zip(x.data()) {
                        *o += two * s * *v;
                    }
                }
                Op::Crf {
                    emissions,
                    transitions,
                    grad_e,
                    grad_a,
                } => {
                    let s = g.scalar_value();
                    accumulate_with(slot(&mut grads, *emissions, grad_e.shape()), grad_e, grad_e, |ge, _| ge * s);
                    accumulate_with(slot(&mut grads, *transitions, grad_a.shape()), grad_a, grad_a, |ga, _| ga * s);
                }
                Op::SoftmaxXent { logits, probs, gold } => {
                    let s = g.scalar_value();
                    let n = probs.cols();
                    let gl = slot(&mut grads, *logits, probs.shape());
                    for (r, (orow, prow)) in gl.data_mut().chunks_mut(n).zip(probs.data().chunks(n)).enumerate() {
                        for (c, (o, p)) in orow.iter_mut().zip(prow).enumerate() {
                            let target = if c == gold[r] { R::one() } else { R::zero() };
                            *o += s * (*p - target);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot<'g, R: Real>(grads: &'g mut [Option<Tensor<R>>], v: Var, shape: &[usize]) -> &'g mut Tensor<R> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

fn accumulate_with<R: Real>(dst: &mut Tensor<R>, g: &Tensor<R>, other: &Tensor<R>, f: impl Fn(R, R) -> R) {
    for ((o, g), x) in dst.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
        *o += f(*g, *x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row(vec![1.0, 2.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let sq = tape.mul(xv, xv).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::zeros(&[1, 4]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let t = tape.tanh(xv);
        let loss = tape.sum(t);
        assert_eq!(tape.backward(loss).unwrap().get(x).data(), &[1.0; 4]);
    }

    #[test]
    fn unreached_params_get_zero() {
        let mut store = ParamStore::<f32>::new();
        let x = store.add("x", Tensor::row(vec![3.0]));
        let y = store.add("y", Tensor::row(vec![5.0, 6.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let loss = tape.sum(xv);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(y).data(), &[0.0, 0.0]);
        assert_eq!(g.get(x).data(), &[1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row(vec![1.0, 2.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        assert!(matches!(tape.backward(xv), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn clipping() {
        let mut g = Gradients {
            grads: vec![Tensor::<f64>::row(vec![3.0, 4.0])],
        };
        assert_eq!(g.clip_global_norm(1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
