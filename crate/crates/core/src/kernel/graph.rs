use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::{gemm, KernelError, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Transpose(Var),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Narrow { src: Var, rows: Range<usize>, cols: Range<usize> },
    Embedding { table: Var, indices: Vec<usize> },
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradient tape. Parameters may be borrowed for the lifetime `'a` so a
/// forward pass does not copy weights.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of the leaves that required them, keyed by their handle.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> KernelError {
    KernelError::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), true)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push_leaf(Cow::Owned(t), requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(Cow::Owned(t), false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), false)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, KernelError> {
        if !value.all_finite() {
            return Err(KernelError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value: Cow::Owned(value), op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2()?;
        let (k2, n) = tb.dims2()?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), (k, 1), tb.data(), (n, 1), &mut out, 0.0);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, KernelError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(name, out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a rank-1 `bias` of length `cols` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, KernelError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (_, c) = ta.dims2()?;
        if tb.shape() != [c] {
            return Err(mismatch("add_row", ta, tb));
        }
        let b = tb.data();
        let data = ta.data().chunks(c).flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("add_row", out, Op::AddRow(a, bias), &[a, bias])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, KernelError> {
        let ta = self.value(a);
        let out = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x * s).collect());
        self.push("scale", out, Op::Scale(a, s), &[a])
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var, KernelError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * std_normal_cdf(x)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("gelu", out, Op::Gelu(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, KernelError> {
        let out = self.value(a).transposed()?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, KernelError> {
        let ta = self.value(a);
        let n: usize = shape.iter().product();
        if n != ta.len() || shape.iter().any(|&d| d == 0) {
            return Err(KernelError::ShapeMismatch {
                op: "reshape",
                left: ta.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = Tensor::from_parts(shape.to_vec(), ta.data().to_vec());
        self.push("reshape", out, Op::Reshape(a), &[a])
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, KernelError> {
        let first = parts.first().ok_or(KernelError::InvalidShape { shape: Vec::new() })?;
        let (_, c) = self.value(*first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            let (r, c2) = t.dims2()?;
            if c2 != c {
                return Err(mismatch("concat_rows", self.value(*first), t));
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_parts(vec![rows, c], data);
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, KernelError> {
        let first = parts.first().ok_or(KernelError::InvalidShape { shape: Vec::new() })?;
        let (r, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            let (r2, c) = t.dims2()?;
            if r2 != r {
                return Err(mismatch("concat_cols", self.value(*first), t));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::from_parts(vec![r, total], data);
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Sub-block `rows × cols` of a matrix.
    pub fn narrow(&mut self, a: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var, KernelError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        if rows.start >= rows.end || cols.start >= cols.end || rows.end > r || cols.end > c {
            return Err(KernelError::ShapeMismatch {
                op: "narrow",
                left: ta.shape().to_vec(),
                right: vec![rows.end, cols.end],
            });
        }
        let w = cols.len();
        let mut data = Vec::with_capacity(rows.len() * w);
        for i in rows.clone() {
            data.extend_from_slice(&ta.data()[i * c + cols.start..i * c + cols.end]);
        }
        let out = Tensor::from_parts(vec![rows.len(), w], data);
        self.push("narrow", out, Op::Narrow { src: a, rows, cols }, &[a])
    }

    /// Gathers rows of `table` by index.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var, KernelError> {
        let t = self.value(table);
        let (n, d) = t.dims2()?;
        if indices.is_empty() {
            return Err(KernelError::InvalidShape { shape: vec![0, d] });
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= n {
                return Err(KernelError::IndexOutOfRange { op: "embedding_lookup", index: i, len: n });
            }
            data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let out = Tensor::from_parts(vec![indices.len(), d], data);
        let op = Op::Embedding { table, indices: indices.to_vec() };
        self.push("embedding_lookup", out, op, &[table])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, KernelError> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, KernelError> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, KernelError> {
        let ta = self.value(a);
        let (_, c) = ta.dims2()?;
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp(*v - max);
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("softmax_rows", out, Op::SoftmaxRows(a), &[a])
    }

    /// Normalizes over the last dimension, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, KernelError> {
        let tx = self.value(x);
        let c = *tx.shape().last().ok_or(KernelError::RankMismatch {
            op: "layer_norm",
            expected: 1,
            shape: Vec::new(),
        })?;
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.shape() != [c] {
            return Err(mismatch("layer_norm", tx, tg));
        }
        if tb.shape() != [c] {
            return Err(mismatch("layer_norm", tx, tb));
        }
        let rows = tx.len() / c;
        let mut xhat = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.len());
        for row in tx.data().chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * tg.data()[j] + tb.data()[j]);
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), out);
        let op = Op::LayerNorm { x, gain, bias, xhat, inv_std };
        self.push("layer_norm", out, op, &[x, gain, bias])
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for every leaf
    /// that requires one and clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, KernelError> {
        if self.nodes.is_empty() {
            return Err(KernelError::EmptyTape);
        }
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(KernelError::NonScalarLoss { shape: lt.shape().to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            self.backprop_node(id, &g, &mut grads);
        }

        let mut out = Gradients::default();
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let data = grads[id].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
                out.grads.insert(Var(id), Tensor::from_parts(node.value.shape().to_vec(), data));
            }
        }
        self.nodes.clear();
        Ok(out)
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(buf);
        };
        let out = &nodes[id].value;

        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                // dA = dC·Bᵀ, dB = Aᵀ·dC
                acc(*a, &mut |ga| gemm(m, n, k, g, (n, 1), tb.data(), (1, n), ga, 1.0));
                acc(*b, &mut |gb| gemm(k, m, n, ta.data(), (1, k), g, (n, 1), gb, 1.0));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (da, db) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |ga| {
                    for ((x, gy), y) in ga.iter_mut().zip(g).zip(db) {
                        *x += gy * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((x, gy), y) in gb.iter_mut().zip(g).zip(da) {
                        *x += gy * y;
                    }
                });
            }
            Op::AddRow(a, bias) => {
                let c = out.shape()[1];
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*bias, &mut |gb| {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Scale(a, s) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += s * y));
            }
            Op::Gelu(a) => {
                let xs = nodes[a.0].value.data();
                acc(*a, &mut |ga| {
                    for ((d, gy), &x) in ga.iter_mut().zip(g).zip(xs) {
                        *d += gy * (std_normal_cdf(x) + x * std_normal_pdf(x));
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                acc(*a, &mut |ga| {
                    // out is r×c, input is c×r
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = nodes[p.0].value.len();
                    acc(p, &mut |gp| gp.iter_mut().zip(&g[offset..offset + n]).for_each(|(x, y)| *x += y));
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = (out.shape()[0], out.shape()[1]);
                let mut col0 = 0;
                for &p in parts {
                    let w = nodes[p.0].value.shape()[1];
                    acc(p, &mut |gp| {
                        for i in 0..r {
                            for j in 0..w {
                                gp[i * w + j] += g[i * total + col0 + j];
                            }
                        }
                    });
                    col0 += w;
                }
            }
            Op::Narrow { src, rows, cols } => {
                let c = nodes[src.0].value.shape()[1];
                let w = cols.len();
                acc(*src, &mut |gs| {
                    for (bi, i) in rows.clone().enumerate() {
                        for j in 0..w {
                            gs[i * c + cols.start + j] += g[bi * w + j];
                        }
                    }
                });
            }
            Op::Embedding { table, indices } => {
                let d = out.shape()[1];
                acc(*table, &mut |gt| {
                    for (row, &i) in indices.iter().enumerate() {
                        for j in 0..d {
                            gt[i * d + j] += g[row * d + j];
                        }
                    }
                });
            }
            Op::Sum(a) => {
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Mean(a) => {
                let n = nodes[a.0].value.len() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::SoftmaxRows(a) => {
                let c = out.shape()[1];
                let y = out.data();
                acc(*a, &mut |ga| {
                    for ((gr, yr), dr) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let c = nodes[gain.0].value.len();
                let gamma = nodes[gain.0].value.data();
                if wants(*x) {
                    acc(*x, &mut |gx| {
                        for (r, &is) in inv_std.iter().enumerate() {
                            let gr = &g[r * c..(r + 1) * c];
                            let hr = &xhat[r * c..(r + 1) * c];
                            let mut sum_dh = 0.0;
                            let mut sum_dh_h = 0.0;
                            for j in 0..c {
                                let dh = gr[j] * gamma[j];
                                sum_dh += dh;
                                sum_dh_h += dh * hr[j];
                            }
                            let cf = c as f64;
                            for j in 0..c {
                                let dh = gr[j] * gamma[j];
                                gx[r * c + j] += is / cf * (cf * dh - sum_dh - hr[j] * sum_dh_h);
                            }
                        }
                    });
                }
                acc(*gain, &mut |gg| {
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for gr in g.chunks(c) {
                        gb.iter_mut().zip(gr).for_each(|(x, y)| *x += y);
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gaussian_sample;
    use crate::rng::seeded;
    use rand::Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    /// Central-difference check of `f` at every coordinate of every input.
    fn fd_check(inputs: &[Tensor], f: &dyn Fn(&mut Graph<'_>, &[Var]) -> Var, h: f64, tol: f64) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.clone(), true)).collect();
        let loss = f(&mut g, &vars);
        let grads = g.backward(loss).unwrap();
        let eval = |xs: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone(), false)).collect();
            let l = f(&mut g, &vars);
            g.value(l).data()[0]
        };
        for (k, x) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).unwrap();
            for i in 0..x.len() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[i];
                let err = (a - numeric).abs() / f64::max(1.0, f64::max(a.abs(), numeric.abs()));
                assert!(err < tol, "input {k} coord {i}: analytic {a} numeric {numeric}");
            }
        }
    }

    /// Weighted sum with fixed pseudo-random weights, so every output entry
    /// gets a distinct upstream gradient.
    fn probe(g: &mut Graph<'_>, v: Var) -> Var {
        let shape = g.value(v).shape().to_vec();
        let w = gaussian_sample(&shape, 99);
        let w = g.constant(w);
        let p = g.mul(v, w).unwrap();
        g.sum(p).unwrap()
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let mut g = Graph::new();
        let i = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = g.matmul(i, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);
        let x = g.constant(t(&[1, 1], &[2.0]));
        let y = g.constant(t(&[1, 1], &[3.0]));
        let z = g.matmul(x, y).unwrap();
        assert_eq!(g.value(z).data(), &[6.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert_eq!(
            err,
            KernelError::ShapeMismatch { op: "matmul", left: vec![2, 3], right: vec![2, 3] }
        );
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let a = gaussian_sample(&[4, 5], 1);
        let b = gaussian_sample(&[5, 3], 2);
        fd_check(
            &[a, b],
            &|g, v| {
                let c = g.matmul(v[0], v[1]).unwrap();
                probe(g, c)
            },
            1e-6,
            1e-6,
        );
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_stable() {
        let mut g = Graph::new();
        let a = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let s = g.softmax_rows(a).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
        let big = g.constant(t(&[1, 2], &[1000.0, 0.0]));
        let s = g.softmax_rows(big).unwrap();
        assert!((g.value(s).data()[0] - 1.0).abs() < 1e-12);
        assert!(g.value(s).data()[1] < 1e-300);

        let r = g.constant(gaussian_sample(&[3, 4], 5));
        let s = g.softmax_rows(r).unwrap();
        for row in g.value(s).data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        fd_check(
            &[gaussian_sample(&[3, 4], 11)],
            &|g, v| {
                let s = g.softmax_rows(v[0]).unwrap();
                probe(g, s)
            },
            1e-6,
            1e-7,
        );
    }

    #[test]
    fn layer_norm_values() {
        let mut g = Graph::new();
        let gain = g.constant(Tensor::filled(&[3], 1.0));
        let bias = g.constant(Tensor::zeros(&[3]));
        let c = g.constant(t(&[1, 3], &[2.0, 2.0, 2.0]));
        let y = g.layer_norm(c, gain, bias, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));

        let x = g.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
        let d = g.value(y).data();
        // population variance of [1,2,3] is 2/3
        let s = libm::sqrt(2.0 / 3.0 + 1e-5);
        let expected = [-1.0 / s, 0.0, 1.0 / s];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean: f64 = d.iter().sum::<f64>() / 3.0;
        let var: f64 = d.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 2e-5);
    }

    #[test]
    fn layer_norm_gradient_matches_finite_differences() {
        let x = gaussian_sample(&[3, 5], 21);
        let gain = gaussian_sample(&[5], 22);
        let bias = gaussian_sample(&[5], 23);
        fd_check(
            &[x, gain, bias],
            &|g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap();
                probe(g, y)
            },
            1e-6,
            1e-5,
        );
    }

    #[test]
    fn backward_trivial_cases() {
        let x = gaussian_sample(&[2, 3], 4);
        let mut g = Graph::new();
        let v = g.leaf(x.clone(), true);
        let s = g.sum(v).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(v).unwrap().data().iter().all(|&d| d == 1.0));
        assert!(g.is_empty(), "tape cleared");

        let v = g.leaf(x.clone(), true);
        let sq = g.mul(v, v).unwrap();
        let s = g.sum(sq).unwrap();
        let half = g.scale(s, 0.5).unwrap();
        let grads = g.backward(half).unwrap();
        assert_eq!(grads.get(v).unwrap(), &x);
    }

    #[test]
    fn backward_contract_errors() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::zeros(&[2]), true);
        assert!(matches!(g.backward(v), Err(KernelError::NonScalarLoss { .. })));
        let mut empty = Graph::new();
        assert_eq!(empty.backward(Var(0)).unwrap_err(), KernelError::EmptyTape);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let x = gaussian_sample(&[6, 4], 31);
        let w1 = gaussian_sample(&[4, 8], 32);
        let b1 = gaussian_sample(&[8], 33);
        let w2 = gaussian_sample(&[8, 3], 34);
        let b2 = gaussian_sample(&[3], 35);
        let target = gaussian_sample(&[6, 3], 36);
        fd_check(
            &[w1, b1, w2, b2],
            &|g, v| {
                let xin = g.constant(x.clone());
                let h = g.matmul(xin, v[0]).unwrap();
                let h = g.add_row(h, v[1]).unwrap();
                let h = g.gelu(h).unwrap();
                let o = g.matmul(h, v[2]).unwrap();
                let o = g.add_row(o, v[3]).unwrap();
                let tg = g.constant(target.clone());
                let d = g.sub(o, tg).unwrap();
                let sq = g.mul(d, d).unwrap();
                g.mean(sq).unwrap()
            },
            1e-5,
            1e-4,
        );
    }

    #[test]
    fn structural_ops_gradients() {
        let a = gaussian_sample(&[3, 4], 41);
        let b = gaussian_sample(&[2, 4], 42);
        let c = gaussian_sample(&[3, 2], 43);
        fd_check(
            &[a, b, c],
            &|g, v| {
                let rows = g.concat_rows(&[v[0], v[1]]).unwrap(); // 5×4
                let tr = g.transpose(rows).unwrap(); // 4×5
                let nar = g.narrow(tr, 1..4, 0..3).unwrap(); // 3×3
                let cols = g.concat_cols(&[nar, v[2]]).unwrap(); // 3×5
                let rs = g.reshape(cols, &[5, 3]).unwrap();
                let emb = g.embedding_lookup(rs, &[4, 0, 4, 2]).unwrap();
                let sc = g.scale(emb, -1.5).unwrap();
                probe(g, sc)
            },
            1e-6,
            1e-7,
        );
    }

    #[test]
    fn embedding_out_of_range() {
        let mut g = Graph::new();
        let tb = g.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(
            g.embedding_lookup(tb, &[3]),
            Err(KernelError::IndexOutOfRange { index: 3, len: 3, .. })
        ));
    }

    #[test]
    fn shape_algebra_never_broadcasts() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[1, 3]));
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
        let bias = g.constant(Tensor::zeros(&[2]));
        assert!(g.add_row(a, bias).is_err());
        assert!(g.reshape(a, &[4, 2]).is_err());
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::filled(&[1], 1e300));
        assert_eq!(g.scale(a, 1e300).unwrap_err(), KernelError::NonFinite { op: "scale" });
    }

    /// Random compositions of up to six unary/binary primitives.
    #[test]
    fn random_compositions_match_finite_differences() {
        let mut rng = seeded(77);
        for case in 0..40 {
            let depth = 1 + case % 6;
            let ops: Vec<u8> = (0..depth).map(|_| rng.random_range(0..7)).collect();
            let x = gaussian_sample(&[3, 3], 100 + case as u64);
            let w = gaussian_sample(&[3, 3], 200 + case as u64);
            let bias = gaussian_sample(&[3], 300 + case as u64);
            fd_check(
                &[x, w, bias],
                &|g, v| {
                    let mut cur = v[0];
                    for &op in &ops {
                        cur = match op {
                            0 => g.matmul(cur, v[1]).unwrap(),
                            1 => g.add_row(cur, v[2]).unwrap(),
                            2 => g.gelu(cur).unwrap(),
                            3 => g.softmax_rows(cur).unwrap(),
                            4 => g.layer_norm(cur, v[2], v[2], 1e-5).unwrap(),
                            5 => g.mul(cur, v[1]).unwrap(),
                            _ => g.transpose(cur).unwrap(),
                        };
                    }
                    probe(g, cur)
                },
                1e-5,
                1e-4,
            );
        }
    }

    #[test]
    fn forward_and_backward_are_deterministic() {
        let run = || {
            let x = gaussian_sample(&[5, 5], 9);
            let mut g = Graph::new();
            let v = g.leaf(x, true);
            let m = g.matmul(v, v).unwrap();
            let s = g.softmax_rows(m).unwrap();
            let l = probe(&mut g, s);
            let val = g.value(l).data()[0];
            let grads = g.backward(l).unwrap();
            (val.to_bits(), grads.get(v).unwrap().data().iter().map(|d| d.to_bits()).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }
}
