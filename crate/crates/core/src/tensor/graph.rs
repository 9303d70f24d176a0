//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation applied during a forward pass. Model
//! parameters enter through [`Graph::param`], which borrows the parameter
//! matrix instead of copying it; repeated bindings of the same parameter map to
//! one leaf so gradients accumulate in a single place.

use std::collections::HashMap;

use crate::scalar::{gelu, gelu_grad, sigmoid, softplus, Scalar};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<'a, T> {
    Owned(Matrix<T>),
    Borrowed(&'a Matrix<T>),
}

impl<T> Value<'_, T> {
    fn get(&self) -> &Matrix<T> {
        match self {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Matrix<T>,
        inv_std: Vec<T>,
    },
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    BroadcastRows(Var),
    Transpose(Var),
    Bce {
        logits: Var,
        targets: Vec<T>,
        pos_weight: T,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix<T>,
    },
}

struct Node<'a, T> {
    value: Value<'a, T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
    params: HashMap<*const Matrix<T>, Var>,
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        self.nodes[v.0].value.get()
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, m: Matrix<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(m),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf bound to a parameter matrix.
    pub fn param(&mut self, m: &'a Matrix<T>) -> Var {
        let key = m as *const Matrix<T>;
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Borrowed(m),
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!(rv.rows(), 1, "add_row expects a row vector");
        assert_eq!(av.cols(), rv.cols(), "add_row width mismatch");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    /// Row-wise layer normalisation with affine parameters `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = T::from_usize_lossy(cols);
        let mut normalized = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            for (o, &v) in normalized.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut out = normalized.clone();
        for r in 0..rows {
            for ((o, &gv), &bv) in out.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gv + bv;
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat_cols row mismatch");
        let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        self.push(Matrix::from_vec(rows, ca + cb, data), Op::ConcatCols(a, b), &[a, b])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        self.push(
            Matrix::from_vec(av.rows(), len, data),
            Op::SliceCols(a, start),
            &[a],
        )
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * av.cols());
        for &i in idx {
            data.extend_from_slice(av.row(i));
        }
        let out = Matrix::from_vec(idx.len(), av.cols(), data);
        self.push(out, Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// Repeats a `1 × cols` row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), 1, "broadcast_rows expects a row vector");
        let mut data = Vec::with_capacity(rows * av.cols());
        for _ in 0..rows {
            data.extend_from_slice(av.data());
        }
        let out = Matrix::from_vec(rows, av.cols(), data);
        self.push(out, Op::BroadcastRows(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    /// Summed binary cross-entropy on logits; `targets` in `[0, 1]`, one per
    /// element. Positive terms are scaled by `pos_weight`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T], pos_weight: T) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.len(), targets.len(), "bce target count mismatch");
        let loss = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (T::one() - y) * softplus(z))
            .sum::<T>();
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::Bce {
                logits,
                targets: targets.to_vec(),
                pos_weight,
            },
            &[logits],
        )
    }

    /// Summed softmax cross-entropy, one target class per row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "cross entropy target count mismatch");
        let mut probs = lv.clone();
        let mut loss = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            softmax_in_place(row);
            loss -= row[t].max(T::min_positive_value()).ln();
        }
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m.get(0, 0)
    }

    fn accumulate(&mut self, v: Var, g: Matrix<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from a scalar loss node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward from non-scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(grad) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &grad);
            self.grads[idx] = Some(grad);
        }
    }

    fn propagate(&mut self, idx: usize, grad: &Matrix<T>) {
        let mut pending: Vec<(Var, Matrix<T>)> = Vec::new();
        let node = &self.nodes[idx];
        let out = node.value.get();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    pending.push((*a, grad.matmul_t(bv)));
                }
                if self.nodes[b.0].requires_grad {
                    pending.push((*b, av.t_matmul(grad)));
                }
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    pending.push((*a, grad.matmul(bv)));
                }
                if self.nodes[b.0].requires_grad {
                    pending.push((*b, grad.t_matmul(av)));
                }
            }
            Op::Add(a, b) => {
                pending.push((*a, grad.clone()));
                pending.push((*b, grad.clone()));
            }
            Op::AddRow(a, r) => {
                pending.push((*a, grad.clone()));
                pending.push((*r, grad.column_sums()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                pending.push((*a, grad.zip_map(bv, |g, y| g * y)));
                pending.push((*b, grad.zip_map(av, |g, x| g * x)));
            }
            Op::Scale(a, s) => {
                let s = *s;
                pending.push((*a, grad.map(|g| g * s)));
            }
            Op::Tanh(a) => {
                pending.push((*a, grad.zip_map(out, |g, y| g * (T::one() - y * y))));
            }
            Op::Sigmoid(a) => {
                pending.push((*a, grad.zip_map(out, |g, y| g * y * (T::one() - y))));
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                pending.push((*a, grad.zip_map(av, |g, x| g * gelu_grad(x))));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let gv = self.value(*gamma);
                let (rows, cols) = grad.shape();
                let n = T::from_usize_lossy(cols);
                let mut dgamma = Matrix::zeros(1, cols);
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let (g_row, xh) = (grad.row(r), normalized.row(r));
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for c in 0..cols {
                        dgamma.data_mut()[c] += g_row[c] * xh[c];
                        let dxh = g_row[c] * gv.data()[c];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[c];
                    }
                    let scale = inv_std[r] / n;
                    let dx_row = dx.row_mut(r);
                    for c in 0..cols {
                        let dxh = g_row[c] * gv.data()[c];
                        dx_row[c] = scale * (n * dxh - sum_dxh - xh[c] * sum_dxh_xh);
                    }
                }
                pending.push((*x, dx));
                pending.push((*gamma, dgamma));
                pending.push((*beta, grad.column_sums()));
            }
            Op::SoftmaxRows(a) => {
                let mut dx = Matrix::zeros(grad.rows(), grad.cols());
                for r in 0..grad.rows() {
                    let (g_row, y) = (grad.row(r), out.row(r));
                    let inner: T = g_row.iter().zip(y).map(|(&g, &p)| g * p).sum();
                    for (d, (&g, &p)) in dx.row_mut(r).iter_mut().zip(g_row.iter().zip(y)) {
                        *d = p * (g - inner);
                    }
                }
                pending.push((*a, dx));
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = Matrix::zeros(grad.rows(), ca);
                let mut db = Matrix::zeros(grad.rows(), cb);
                for r in 0..grad.rows() {
                    da.row_mut(r).copy_from_slice(&grad.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&grad.row(r)[ca..]);
                }
                pending.push((*a, da));
                pending.push((*b, db));
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let mut da = Matrix::zeros(av.rows(), av.cols());
                for r in 0..grad.rows() {
                    da.row_mut(r)[*start..*start + grad.cols()].copy_from_slice(grad.row(r));
                }
                pending.push((*a, da));
            }
            Op::GatherRows(a, idxs) => {
                let av = self.value(*a);
                let mut da = Matrix::zeros(av.rows(), av.cols());
                for (r, &i) in idxs.iter().enumerate() {
                    for (d, &g) in da.row_mut(i).iter_mut().zip(grad.row(r)) {
                        *d += g;
                    }
                }
                pending.push((*a, da));
            }
            Op::BroadcastRows(a) => {
                pending.push((*a, grad.column_sums()));
            }
            Op::Transpose(a) => {
                pending.push((*a, grad.transpose()));
            }
            Op::Bce {
                logits,
                targets,
                pos_weight,
            } => {
                let g = grad.get(0, 0);
                let lv = self.value(*logits);
                let data = lv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| {
                        let s = sigmoid(z);
                        g * (*pos_weight * y * (s - T::one()) + (T::one() - y) * s)
                    })
                    .collect();
                pending.push((*logits, Matrix::from_vec(lv.rows(), lv.cols(), data)));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let g = grad.get(0, 0);
                let mut d = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let row = d.row_mut(r);
                    row[t] -= T::one();
                    for v in row.iter_mut() {
                        *v *= g;
                    }
                }
                pending.push((*logits, d));
            }
        }
        for (v, g) in pending {
            self.accumulate(v, g);
        }
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a bound parameter, if it took part in the loss.
    pub fn param_grad(&self, m: &Matrix<T>) -> Option<&Matrix<T>> {
        let key = m as *const Matrix<T>;
        self.params.get(&key).and_then(|&v| self.grad(v))
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
