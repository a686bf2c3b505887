//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass in creation
//! order, which is already a topological order. [`Graph::backward`] walks
//! the tape in reverse exactly once.

use std::collections::HashMap;

use rand::{Rng, RngCore};

use crate::params::ParamStore;
use crate::tensor::{Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MeanRows(Var),
    Sum(Var),
    Reshape(Var),
    LayerNorm { x: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Mse(Var, Var),
    Dropout { x: Var, mask: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, Var>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

enum Broadcast {
    Same,
    Trailing(usize),
}

fn broadcast(a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    let sb: Vec<usize> = b
        .shape()
        .iter()
        .copied()
        .skip_while(|&d| d == 1)
        .collect();
    let sa = a.shape();
    if sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == sb[..] {
        return Ok(Broadcast::Trailing(b.numel()));
    }
    Err(TensorError::Dimension(format!(
        "cannot broadcast {:?} onto {:?}",
        b.shape(),
        a.shape()
    )))
}

fn add_into(acc: &mut Option<Vec<f64>>, g: &[f64]) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
        None => *acc = Some(g.to_vec()),
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

impl Graph {
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

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient in [`Gradients`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Node bound to a named parameter. Repeated lookups share one node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let idx = store
            .index_of(name)
            .ok_or_else(|| TensorError::Parameter(format!("unknown parameter '{name}'")))?;
        if let Some(&v) = self.param_nodes.get(&idx) {
            return Ok(v);
        }
        let t = store.get_index(idx);
        let value = Tensor::new(t.shape().to_vec(), t.data().to_vec())?;
        let v = self.push(value, Op::Param(idx), true);
        self.param_nodes.insert(idx, v);
        Ok(v)
    }

    pub(crate) fn param_grads<'a>(
        &'a self,
        grads: &'a Gradients,
    ) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        self.nodes.iter().enumerate().filter_map(move |(i, n)| match n.op {
            Op::Param(idx) => grads.grads[i].as_deref().map(|g| (idx, g)),
            _ => None,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(TensorError::Dimension(format!(
                "matmul inner dimensions {m}×{k} · {k2}×{n}"
            )));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out: Vec<f64> = match broadcast(ta, tb)? {
            Broadcast::Same => ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect(),
            Broadcast::Trailing(nb) => ta
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| f(*x, tb.data()[i % nb]))
                .collect(),
        };
        Tensor::new(ta.shape().to_vec(), out)
    }

    /// Elementwise sum; `b` may broadcast over leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect())
            .expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Scale(a, c), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| f(*x)).collect())
            .expect("same shape")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.unary(a, |x| if x > 0.0 { x } else { 0.0 });
        let ng = self.ng(a);
        self.push(t, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::tanh);
        let ng = self.ng(a);
        self.push(t, Op::Tanh(a), ng)
    }

    /// Softmax over each row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_masked(a, false)
    }

    /// Row softmax where row `i` may only attend to columns `j ≤ i + (n − m)`.
    /// Masked entries are exactly zero.
    pub fn causal_softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_masked(a, true)
    }

    fn softmax_masked(&mut self, a: Var, causal: bool) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if causal && n < m {
            return Err(TensorError::Dimension(format!(
                "causal softmax needs cols ≥ rows, got {m}×{n}"
            )));
        }
        let mut out = self.value(a).data().to_vec();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            if causal {
                let visible = i + (n - m) + 1;
                softmax_row(&mut row[..visible]);
                row[visible..].iter_mut().for_each(|v| *v = 0.0);
            } else {
                softmax_row(row);
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Softmax(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let out = transpose_raw(self.value(a).data(), m, n);
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), ng))
    }

    /// Row lookup: embedding tables, position selection.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, n) = self.value(table).dims2()?;
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::Index(format!("row {i} of {rows}")));
            }
            out.extend_from_slice(&self.value(table).data()[i * n..(i + 1) * n]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::new(vec![indices.len(), n], out)?,
            Op::GatherRows(table, indices.to_vec()),
            ng,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mut n = None;
        let mut m = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if *n.get_or_insert(pn) != pn {
                return Err(TensorError::Dimension("concat_rows width mismatch".into()));
            }
            m += pm;
            out.extend_from_slice(self.value(p).data());
        }
        let n = n.ok_or_else(|| TensorError::Dimension("concat of nothing".into()))?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            dims.push(self.value(p).dims2()?);
        }
        let m = dims
            .first()
            .map(|d| d.0)
            .ok_or_else(|| TensorError::Dimension("concat of nothing".into()))?;
        if dims.iter().any(|d| d.0 != m) {
            return Err(TensorError::Dimension("concat_cols height mismatch".into()));
        }
        let n: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &(_, pn)) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.value(p).data()[i * pn..(i + 1) * pn]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if start + len > m {
            return Err(TensorError::Index(format!("rows {start}..{} of {m}", start + len)));
        }
        let out = self.value(a).data()[start * n..(start + len) * n].to_vec();
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![len, n], out)?, Op::SliceRows(a, start), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if start + len > n {
            return Err(TensorError::Index(format!("cols {start}..{} of {n}", start + len)));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![m, len], out)?, Op::SliceCols(a, start), ng))
    }

    /// Column means: `[m×n] → [1×n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if m == 0 {
            return Err(TensorError::Dimension("mean over zero rows".into()));
        }
        let src = self.value(a).data();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += src[i * n + j];
            }
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![1, n], out)?, Op::MeanRows(a), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(t.shape().to_vec(), t.into_data())?, Op::Reshape(a), ng))
    }

    /// Per-row standardisation (no affine part), ε = 1e-5.
    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let (m, n) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                xhat[i * n + j] = (row[j] - mean) * is;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(
            Tensor::new(vec![m, n], xhat.clone())?,
            Op::LayerNorm { x: a, xhat, inv_std },
            ng,
        ))
    }

    /// Mean token-level negative log-likelihood of `targets` under row-wise
    /// softmax of `logits[T×V]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (t, v) = self.value(logits).dims2()?;
        if targets.len() != t {
            return Err(TensorError::Dimension(format!(
                "{} targets for {t} logit rows",
                targets.len()
            )));
        }
        if t == 0 {
            return Err(TensorError::Dimension("no positions".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= v) {
            return Err(TensorError::Index(format!("target id {bad} ≥ vocabulary {v}")));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let row = &mut probs[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            for z in row.iter_mut() {
                *z = (*z - lse).exp();
            }
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss / t as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Mean squared difference of two same-shape nodes.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(TensorError::Dimension(format!(
                "mse of {:?} against {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let n = p.numel().max(1) as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let ng = self.ng(pred) || self.ng(target);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target), ng))
    }

    /// Inverted dropout. Identity when `training` is false or `p == 0`.
    pub fn dropout(
        &mut self,
        a: Var,
        p: f64,
        rng: &mut dyn RngCore,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Parameter(format!("dropout p = {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let ta = self.value(a);
        let out = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Dropout { x: a, mask }, ng))
    }

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Dimension(format!(
                "backward from non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2().unwrap();
                let (_, n) = val(*b).dims2().unwrap();
                if wants(*a) {
                    // dA = dC · Bᵀ
                    let bt = transpose_raw(val(*b).data(), k, n);
                    add_into(&mut grads[a.0], &matmul_raw(g, &bt, m, n, k));
                }
                if wants(*b) {
                    // dB = Aᵀ · dC
                    let at = transpose_raw(val(*a).data(), m, k);
                    add_into(&mut grads[b.0], &matmul_raw(&at, g, k, m, n));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if wants(*b) {
                    let nb = val(*b).numel();
                    let mut gb = vec![0.0; nb];
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % nb] += sign * gi;
                    }
                    add_into(&mut grads[b.0], &gb);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                let nb = tb.len();
                if wants(*a) {
                    let ga: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * tb[i % nb]).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                if wants(*b) {
                    let mut gb = vec![0.0; nb];
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % nb] += gi * ta[i];
                    }
                    add_into(&mut grads[b.0], &gb);
                }
            }
            Op::Scale(a, c) => {
                let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Relu(a) => {
                // Subgradient at exactly zero is 0.
                let ga: Vec<f64> = g
                    .iter()
                    .zip(val(*a).data())
                    .map(|(gi, x)| if *x > 0.0 { *gi } else { 0.0 })
                    .collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Tanh(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Softmax(a) => {
                let (m, n) = node.value.dims2().unwrap();
                let y = node.value.data();
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let dot: f64 = g[r.clone()].iter().zip(&y[r.clone()]).map(|(p, q)| p * q).sum();
                    for j in r {
                        ga[j] = y[j] * (g[j] - dot);
                    }
                }
                add_into(&mut grads[a.0], &ga);
            }
            Op::Transpose(a) => {
                let (m, n) = node.value.dims2().unwrap();
                add_into(&mut grads[a.0], &transpose_raw(g, m, n));
            }
            Op::GatherRows(table, indices) => {
                let (_, n) = val(*table).dims2().unwrap();
                let mut gt = vec![0.0; val(*table).numel()];
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..n {
                        gt[i * n + j] += g[r * n + j];
                    }
                }
                add_into(&mut grads[table.0], &gt);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = val(*p).numel();
                    if wants(*p) {
                        add_into(&mut grads[p.0], &g[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = node.value.dims2().unwrap();
                let mut off = 0;
                for p in parts {
                    let (_, pn) = val(*p).dims2().unwrap();
                    if wants(*p) {
                        let mut gp = Vec::with_capacity(m * pn);
                        for i in 0..m {
                            gp.extend_from_slice(&g[i * n + off..i * n + off + pn]);
                        }
                        add_into(&mut grads[p.0], &gp);
                    }
                    off += pn;
                }
            }
            Op::SliceRows(a, start) => {
                let (_, n) = val(*a).dims2().unwrap();
                let mut ga = vec![0.0; val(*a).numel()];
                ga[start * n..start * n + g.len()].copy_from_slice(g);
                add_into(&mut grads[a.0], &ga);
            }
            Op::SliceCols(a, start) => {
                let (m, n) = val(*a).dims2().unwrap();
                let (_, len) = node.value.dims2().unwrap();
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    ga[i * n + start..i * n + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                add_into(&mut grads[a.0], &ga);
            }
            Op::MeanRows(a) => {
                let (m, n) = val(*a).dims2().unwrap();
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] = g[j] / m as f64;
                    }
                }
                add_into(&mut grads[a.0], &ga);
            }
            Op::Sum(a) => {
                add_into(&mut grads[a.0], &vec![g[0]; val(*a).numel()]);
            }
            Op::Reshape(a) => add_into(&mut grads[a.0], g),
            Op::LayerNorm { x, xhat, inv_std } => {
                let (m, n) = val(*x).dims2().unwrap();
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let gm = g[r.clone()].iter().sum::<f64>() / n as f64;
                    let gx = g[r.clone()].iter().zip(&xhat[r.clone()]).map(|(p, q)| p * q).sum::<f64>()
                        / n as f64;
                    for j in r {
                        ga[j] = inv_std[i] * (g[j] - gm - xhat[j] * gx);
                    }
                }
                add_into(&mut grads[x.0], &ga);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let t = targets.len();
                let v = probs.len() / t;
                let scale = g[0] / t as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &y) in targets.iter().enumerate() {
                    gl[i * v + y] -= scale;
                }
                add_into(&mut grads[logits.0], &gl);
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (val(*p).data(), val(*t).data());
                let c = 2.0 * g[0] / tp.len().max(1) as f64;
                let d: Vec<f64> = tp.iter().zip(tt).map(|(a, b)| c * (a - b)).collect();
                if wants(*p) {
                    add_into(&mut grads[p.0], &d);
                }
                if wants(*t) {
                    let neg: Vec<f64> = d.iter().map(|x| -x).collect();
                    add_into(&mut grads[t.0], &neg);
                }
            }
            Op::Dropout { x, mask } => {
                let ga: Vec<f64> = g.iter().zip(mask).map(|(a, b)| a * b).collect();
                add_into(&mut grads[x.0], &ga);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let x = t(&[vec![1.5, -2.0, 0.25], vec![3.0, 4.0, -1.0]]);
        let i = g.constant(Tensor::eye(2));
        let xv = g.constant(x.clone());
        let y = g.matmul(i, xv).unwrap();
        assert_eq!(g.value(y).data(), x.data());
    }

    #[test]
    fn small_matmul() {
        let mut g = Graph::new();
        let a = g.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.constant(t(&[vec![1.0], vec![1.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::row(&[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);

        let mut g = Graph::new();
        let x = g.variable(Tensor::row(&[-1.0, 2.0, 0.0]));
        let y = g.relu(x);
        let w = g.constant(Tensor::row(&[5.0, 5.0, 5.0]));
        let z = g.mul(y, w).unwrap();
        let s = g.sum(z);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 5.0, 0.0]);
    }

    #[test]
    fn add_zero_is_identity_and_bias_broadcasts() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let z = g.constant(Tensor::zeros(&[2, 2]));
        let y = g.add(x, z).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());

        let b = g.constant(Tensor::new(vec![2], vec![10.0, 20.0]).unwrap());
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y).data(), &[11.0, 22.0, 13.0, 24.0]);

        let bad = g.constant(Tensor::zeros(&[3]));
        assert!(g.add(x, bad).is_err());
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let mut g = Graph::new();
        let l = g.constant(Tensor::zeros(&[3, 2]));
        let ce = g.softmax_cross_entropy(l, &[0, 1, 1]).unwrap();
        assert!((g.scalar(ce) - 2f64.ln()).abs() < 1e-12);

        let l = g.constant(t(&[vec![1e6, 0.0, 0.0]]));
        let ce = g.softmax_cross_entropy(l, &[0]).unwrap();
        assert!(g.scalar(ce).abs() < 1e-12);

        assert!(matches!(
            g.softmax_cross_entropy(l, &[3]),
            Err(TensorError::Index(_))
        ));
    }

    #[test]
    fn mse_cases() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::row(&[0.3]));
        let b = g.constant(Tensor::row(&[0.1]));
        let m = g.mse(a, b).unwrap();
        assert!((g.scalar(m) - 0.04).abs() < 1e-15);
        let m = g.mse(a, a).unwrap();
        assert_eq!(g.scalar(m), 0.0);
        let c = g.constant(Tensor::zeros(&[2]));
        assert!(g.mse(a, c).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_causal_mask() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![1.0, 2.0, 3.0], vec![-5.0, 0.0, 5.0], vec![0.1, 0.1, 0.1]]));
        let s = g.softmax(x).unwrap();
        for r in 0..3 {
            let total: f64 = g.value(s).row_slice(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let c = g.causal_softmax(x).unwrap();
        let v = g.value(c).data();
        assert_eq!(v[0], 1.0);
        assert_eq!(&v[1..3], &[0.0, 0.0]);
        assert_eq!(v[5], 0.0);
        assert!(v.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[1, 8], 2.0));
        let y = g.dropout(x, 0.5, &mut rng, false).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        let y = g.dropout(x, 0.0, &mut rng, true).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        assert!(matches!(
            g.dropout(x, 1.0, &mut rng, true),
            Err(TensorError::Parameter(_))
        ));
    }

    #[test]
    fn dropout_zero_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[1, 100_000], 1.0));
        let y = g.dropout(x, 0.5, &mut rng, true).unwrap();
        let zeros = g.value(y).data().iter().filter(|v| **v == 0.0).count();
        let frac = zeros as f64 / 1e5;
        assert!((frac - 0.5).abs() < 0.01, "zero fraction {frac}");
        assert!(g.value(y).data().iter().all(|v| *v == 0.0 || *v == 2.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(&[2, 2]));
        assert!(g.backward(x).is_err());
    }
}
