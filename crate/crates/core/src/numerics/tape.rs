//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`] walks the
//! nodes in reverse creation order, which is a valid topological order by construction.
//! Parameters are borrowed from a [`ParamSet`] and never copied onto the tape.

use std::hash::{DefaultHasher, Hasher};

use super::params::{Gradients, ParamId, ParamSet};
use super::tensor::{self, conv_dims, gemm_nn, gemm_nt, gemm_tn, Float, Tensor, LOG_FLOOR};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    GatherParam { id: ParamId, rows: Vec<usize> },
    Gather { src: Var, rows: Vec<usize> },
    ScatterRows { src: Var, rows: Vec<usize>, weights: Option<Vec<T>> },
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<T>),
    MulRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Concat(Vec<Var>),
    Conv1d(Var, Var),
    MaskFill(Var, Vec<bool>),
    Softmax(Var),
    Reshape(Var),
    CrossEntropy { probs: Var, targets: Vec<Option<usize>>, weights: Vec<T> },
    Sum(Var),
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
    needs_grad: bool,
}

pub struct Tape<'p, T: Float> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
    kinks: DefaultHasher,
    corrupt_backward: bool,
}

impl<'p, T: Float> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            kinks: DefaultHasher::new(),
            corrupt_backward: false,
        }
    }

    /// Test hook: makes ReLU backward deliberately wrong so gradient checks can be
    /// shown to fail.
    pub fn set_corrupt_backward(&mut self, on: bool) {
        self.corrupt_backward = on;
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every ReLU activation pattern and log-clamp decision taken so far.
    /// Two evaluations with equal fingerprints ran through the same smooth piece of
    /// the loss surface.
    pub fn kink_fingerprint(&self) -> u64 {
        self.kinks.finish()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Input, value, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter `{name}`")))?;
        Ok(self.param(id))
    }

    /// Row lookup into a parameter table; the gradient stays sparse.
    pub fn gather_param(&mut self, id: ParamId, rows: &[usize]) -> Result<Var> {
        let table = self.params.get(id);
        let value = gather_rows(table, rows, "gather_param")?;
        Ok(self.push(
            Op::GatherParam {
                id,
                rows: rows.to_vec(),
            },
            value,
            true,
        ))
    }

    pub fn gather(&mut self, src: Var, rows: &[usize]) -> Result<Var> {
        let value = gather_rows(self.value(src), rows, "gather")?;
        let ng = self.needs(src);
        Ok(self.push(
            Op::Gather {
                src,
                rows: rows.to_vec(),
            },
            value,
            ng,
        ))
    }

    /// `out[rows[e]] += weights[e] * src[e]` into an `n_out`-row matrix, in `e` order.
    pub fn scatter_rows(
        &mut self,
        src: Var,
        rows: &[usize],
        n_out: usize,
        weights: Option<Vec<T>>,
    ) -> Result<Var> {
        let s = self.value(src);
        let (n, c) = s.as_matrix("scatter_rows")?;
        if rows.len() != n || weights.as_ref().is_some_and(|w| w.len() != n) {
            return Err(Error::shape("scatter_rows", s.shape(), &[rows.len()]));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= n_out) {
            return Err(Error::Invalid(format!(
                "scatter_rows target {bad} out of range for {n_out} rows"
            )));
        }
        let mut out = Tensor::zeros(&[n_out, c]);
        for (e, &r) in rows.iter().enumerate() {
            let w = weights.as_ref().map_or(T::one(), |w| w[e]);
            let src_row = s.row(e);
            for (o, &x) in out.row_mut(r).iter_mut().zip(src_row) {
                *o += w * x;
            }
        }
        let ng = self.needs(src);
        Ok(self.push(
            Op::ScatterRows {
                src,
                rows: rows.to_vec(),
                weights,
            },
            out,
            ng,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul_nt(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMulNt(a, b), value, ng))
    }

    /// Adds a bias vector to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        let (_, c) = x.as_matrix("add_row")?;
        if b.len() != c {
            return Err(Error::shape("add_row", x.shape(), b.shape()));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(c) {
            row.iter_mut().zip(b.data()).for_each(|(o, &v)| *o += v);
        }
        let ng = self.needs(a) || self.needs(bias);
        Ok(self.push(Op::AddRow(a, bias), out, ng))
    }

    /// `x · Wᵀ + b` with `W` stored as `out×in`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let y = self.matmul_nt(x, weight)?;
        match bias {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "add", |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, ng))
    }

    fn zip_same(&self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(op, x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    /// Elementwise product with a constant of the same length (dropout masks, fixed
    /// distance factors).
    pub fn mul_const(&mut self, a: Var, c: Vec<T>) -> Result<Var> {
        let x = self.value(a);
        if c.len() != x.len() {
            return Err(Error::shape("mul_const", x.shape(), &[c.len()]));
        }
        let data = x.data().iter().zip(&c).map(|(&p, &q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let ng = self.needs(a);
        Ok(self.push(Op::MulConst(a, c), value, ng))
    }

    /// `out[i][j] = a[i][j] * row[j]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        let (_, c) = x.as_matrix("mul_row")?;
        if r.len() != c {
            return Err(Error::shape("mul_row", x.shape(), r.shape()));
        }
        let mut out = x.clone();
        for chunk in out.data_mut().chunks_mut(c) {
            chunk.iter_mut().zip(r.data()).for_each(|(o, &v)| *o *= v);
        }
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(Op::MulRow(a, row), out, ng))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().for_each(|x| *x *= c);
        let ng = self.needs(a);
        self.push(Op::Scale(a, c), value, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = tensor::relu(self.value(a));
        for &x in value.data() {
            self.kinks.write_u8((x > T::zero()) as u8);
        }
        let ng = self.needs(a);
        self.push(Op::Relu(a), value, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = tensor::concat_cols(&values)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::Concat(parts.to_vec()), value, ng))
    }

    pub fn conv1d(&mut self, seq: Var, kernel: Var) -> Result<Var> {
        let value = tensor::conv1d(self.value(seq), self.value(kernel))?;
        let ng = self.needs(seq) || self.needs(kernel);
        Ok(self.push(Op::Conv1d(seq, kernel), value, ng))
    }

    /// Replaces masked entries by `-inf` so a following softmax gives them zero weight.
    pub fn mask_fill(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(Error::shape("mask_fill", x.shape(), &[mask.len()]));
        }
        let mut value = x.clone();
        for (v, &m) in value.data_mut().iter_mut().zip(&mask) {
            if m {
                *v = T::neg_infinity();
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Op::MaskFill(a, mask), value, ng))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = tensor::softmax_rows(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::Softmax(a), value, ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        let ng = self.needs(a);
        Ok(self.push(Op::Reshape(a), value, ng))
    }

    /// `Σ_i weights[i] · -ln(max(probs[i][targets[i]], LOG_FLOOR))`, skipping rows whose
    /// target is `None`.
    pub fn cross_entropy_rows(
        &mut self,
        probs: Var,
        targets: &[Option<usize>],
        weights: &[T],
    ) -> Result<Var> {
        let p = self.value(probs);
        let (n, c) = p.as_matrix("cross_entropy_rows")?;
        if targets.len() != n || weights.len() != n {
            return Err(Error::shape("cross_entropy_rows", p.shape(), &[targets.len()]));
        }
        let floor = T::of(LOG_FLOOR);
        let mut total = T::zero();
        let mut clamped = Vec::new();
        for (i, (t, &w)) in targets.iter().zip(weights).enumerate() {
            let Some(t) = *t else { continue };
            if t >= c {
                return Err(Error::Invalid(format!("target class {t} out of range for {c}")));
            }
            let pt = p.at(i, t);
            clamped.push(pt <= floor);
            total += w * -pt.max(floor).ln();
        }
        for c in clamped {
            self.kinks.write_u8(c as u8);
        }
        let ng = self.needs(probs);
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
            Tensor::scalar(total),
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        let ng = self.needs(a);
        self.push(Op::Sum(a), Tensor::scalar(total), ng)
    }

    /// Gradients of the scalar `root` with respect to every parameter it reaches.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        self.backward_scaled(root, T::one())
    }

    /// Like [`Tape::backward`] with the seed gradient set to `seed`.
    pub fn backward_scaled(&self, root: Var, seed: T) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::Invalid(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![seed]);
        let mut out = Gradients::new(self.params.len());

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::GatherParam { id, rows } => {
                    let width = self.params.get(*id).cols();
                    for (e, &r) in rows.iter().enumerate() {
                        out.add_row(*id, r, width, &g[e * width..(e + 1) * width]);
                    }
                }
                Op::Gather { src, rows } => {
                    let width = self.value(*src).cols();
                    if let Some(ds) = self.slot(&mut grads, *src) {
                        for (e, &r) in rows.iter().enumerate() {
                            add_into(&mut ds[r * width..(r + 1) * width], &g[e * width..(e + 1) * width]);
                        }
                    }
                }
                Op::ScatterRows { src, rows, weights } => {
                    let width = self.value(*src).cols();
                    if let Some(ds) = self.slot(&mut grads, *src) {
                        for (e, &r) in rows.iter().enumerate() {
                            let w = weights.as_ref().map_or(T::one(), |w| w[e]);
                            for (d, &gv) in ds[e * width..(e + 1) * width]
                                .iter_mut()
                                .zip(&g[r * width..(r + 1) * width])
                            {
                                *d += w * gv;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (n, k) = (self.value(*a).rows(), self.value(*a).cols());
                    let p = self.value(*b).cols();
                    let bv = self.value(*b).data();
                    if let Some(da) = self.slot(&mut grads, *a) {
                        gemm_nt(&g, bv, da, n, p, k);
                    }
                    let av = self.value(*a).data();
                    if let Some(db) = self.slot(&mut grads, *b) {
                        gemm_tn(av, &g, db, n, k, p);
                    }
                }
                Op::MatMulNt(a, b) => {
                    let (n, k) = (self.value(*a).rows(), self.value(*a).cols());
                    let p = self.value(*b).rows();
                    let bv = self.value(*b).data();
                    if let Some(da) = self.slot(&mut grads, *a) {
                        gemm_nn(&g, bv, da, n, p, k);
                    }
                    let av = self.value(*a).data();
                    if let Some(db) = self.slot(&mut grads, *b) {
                        gemm_tn(&g, av, db, n, p, k);
                    }
                }
                Op::AddRow(a, bias) => {
                    let c = self.value(*bias).len();
                    if let Some(da) = self.slot(&mut grads, *a) {
                        add_into(da, &g);
                    }
                    if let Some(db) = self.slot(&mut grads, *bias) {
                        for row in g.chunks(c) {
                            add_into(db, row);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(d) = self.slot(&mut grads, v) {
                            add_into(d, &g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for ((d, &gv), &y) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    if let Some(db) = self.slot(&mut grads, *b) {
                        for ((d, &gv), &x) in db.iter_mut().zip(&g).zip(av) {
                            *d += gv * x;
                        }
                    }
                }
                Op::MulConst(a, c) => {
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for ((d, &gv), &cv) in da.iter_mut().zip(&g).zip(c) {
                            *d += gv * cv;
                        }
                    }
                }
                Op::MulRow(a, row) => {
                    let (av, rv) = (self.value(*a).data(), self.value(*row).data());
                    let c = rv.len();
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for (i, (d, &gv)) in da.iter_mut().zip(&g).enumerate() {
                            *d += gv * rv[i % c];
                        }
                    }
                    if let Some(dr) = self.slot(&mut grads, *row) {
                        for (i, (&gv, &x)) in g.iter().zip(av).enumerate() {
                            dr[i % c] += gv * x;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for (d, &gv) in da.iter_mut().zip(&g) {
                            *d += *c * gv;
                        }
                    }
                }
                Op::Relu(a) => {
                    let y = node.value.as_ref().expect("relu value").data();
                    let factor = if self.corrupt_backward { T::of(1.5) } else { T::one() };
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for ((d, &gv), &yv) in da.iter_mut().zip(&g).zip(y) {
                            if yv > T::zero() {
                                *d += factor * gv;
                            }
                        }
                    }
                }
                Op::Concat(parts) => {
                    let n = node.value.as_ref().expect("concat value").rows();
                    let total = g.len() / n;
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if let Some(dp) = self.slot(&mut grads, p) {
                            for i in 0..n {
                                add_into(
                                    &mut dp[i * w..(i + 1) * w],
                                    &g[i * total + offset..i * total + offset + w],
                                );
                            }
                        }
                        offset += w;
                    }
                }
                Op::Conv1d(seq, kernel) => {
                    let (sv, kv) = (self.value(*seq), self.value(*kernel));
                    let (n, d_in, w, d_out) = conv_dims(sv, kv)?;
                    let r = w / 2;
                    let (x, k) = (sv.data(), kv.data());
                    if let Some(dx) = self.slot(&mut grads, *seq) {
                        for i in 0..n {
                            for t in 0..w {
                                let Some(src) = (i + t).checked_sub(r).filter(|&s| s < n) else {
                                    continue;
                                };
                                let k_t = &k[t * d_in * d_out..(t + 1) * d_in * d_out];
                                gemm_nt(
                                    &g[i * d_out..(i + 1) * d_out],
                                    k_t,
                                    &mut dx[src * d_in..(src + 1) * d_in],
                                    1,
                                    d_out,
                                    d_in,
                                );
                            }
                        }
                    }
                    if let Some(dk) = self.slot(&mut grads, *kernel) {
                        for i in 0..n {
                            for t in 0..w {
                                let Some(src) = (i + t).checked_sub(r).filter(|&s| s < n) else {
                                    continue;
                                };
                                gemm_tn(
                                    &x[src * d_in..(src + 1) * d_in],
                                    &g[i * d_out..(i + 1) * d_out],
                                    &mut dk[t * d_in * d_out..(t + 1) * d_in * d_out],
                                    1,
                                    d_in,
                                    d_out,
                                );
                            }
                        }
                    }
                }
                Op::MaskFill(a, mask) => {
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for ((d, &gv), &m) in da.iter_mut().zip(&g).zip(mask) {
                            if !m {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().expect("softmax value");
                    let c = y.cols();
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for (i, (drow, grow)) in da.chunks_mut(c).zip(g.chunks(c)).enumerate() {
                            let yrow = y.row(i);
                            let dot: T = yrow.iter().zip(grow).map(|(&p, &q)| p * q).sum();
                            for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                                *d += yv * (gv - dot);
                            }
                        }
                    }
                }
                Op::Reshape(a) => {
                    if let Some(da) = self.slot(&mut grads, *a) {
                        add_into(da, &g);
                    }
                }
                Op::CrossEntropy {
                    probs,
                    targets,
                    weights,
                } => {
                    let p = self.value(*probs);
                    let c = p.cols();
                    let floor = T::of(LOG_FLOOR);
                    let pd = p.data();
                    if let Some(dp) = self.slot(&mut grads, *probs) {
                        for (i, (t, &w)) in targets.iter().zip(weights).enumerate() {
                            let Some(t) = *t else { continue };
                            let pt = pd[i * c + t];
                            if pt > floor {
                                dp[i * c + t] += g[0] * (-w / pt);
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    if let Some(da) = self.slot(&mut grads, *a) {
                        da.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
            }
        }
        Ok(out)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.needs(v) {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }
}

fn add_into<T: Float>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn gather_rows<T: Float>(table: &Tensor<T>, rows: &[usize], op: &'static str) -> Result<Tensor<T>> {
    if rows.is_empty() {
        return Err(Error::Invalid(format!("{op} with no rows")));
    }
    let c = table.cols();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        if r >= table.rows() {
            return Err(Error::Invalid(format!(
                "{op}: row {r} out of range for table with {} rows",
                table.rows()
            )));
        }
        data.extend_from_slice(table.row(r));
    }
    Tensor::new(vec![rows.len(), c], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_backward_is_ones_times_b_transpose() {
        let mut params = ParamSet::<f64>::new();
        let a = params
            .insert("a", Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let b = params
            .insert("b", Tensor::from_f64(&[2, 1], &[5.0, 6.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new(&params);
        let (va, vb) = (tape.param(a), tape.param(b));
        let y = tape.matmul(va, vb).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.dense(a, 4), vec![5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g.dense(b, 2), vec![4.0, 6.0]);
    }

    #[test]
    fn masked_targets_produce_no_gradient() {
        let mut params = ParamSet::<f64>::new();
        let w = params
            .insert("w", Tensor::from_f64(&[2, 3], &[0.1, 0.2, 0.3, -0.1, 0.0, 0.4]).unwrap())
            .unwrap();
        let mut tape = Tape::new(&params);
        let vw = tape.param(w);
        let p = tape.softmax_rows(vw).unwrap();
        let loss = tape.cross_entropy_rows(p, &[Some(1), None], &[1.0, 1.0]).unwrap();
        let g = tape.backward(loss).unwrap().dense(w, 6);
        assert!(g[3..].iter().all(|&x| x == 0.0));
        assert!(g[..3].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn mean_of_two_token_losses() {
        let params = ParamSet::<f64>::new();
        let mut tape = Tape::new(&params);
        let e = 1f64.exp();
        // -ln(1/e) = 1 and -ln(1/e^3) = 3
        let probs = tape.input(Tensor::from_f64(&[2, 2], &[1.0 / e, 1.0 - 1.0 / e, 1.0 / e.powi(3), 1.0 - 1.0 / e.powi(3)]).unwrap());
        let loss = tape
            .cross_entropy_rows(probs, &[Some(0), Some(0)], &[0.5, 0.5])
            .unwrap();
        assert!((tape.value(loss).data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar() {
        let params = ParamSet::<f32>::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(x).is_err());
    }
}
