//! Dynamic reverse-mode tape.
//!
//! A [`Tape`] records every forward op as a node holding its output value.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::{gemm, gemm_nt, gemm_tn, Tensor};

/// Lower clamp applied before every logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Handle to a node on a specific tape. Stale after [`Tape::clear`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    generation: u64,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    SliceCols { x: usize, start: usize },
    GatherRows { x: usize, indices: Vec<usize> },
    Transpose(usize),
    MeanAxis { x: usize, axis: usize },
    SumAll(usize),
    MeanAll(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Log(usize),
    Exp(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, usize>,
    generation: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            generation: next_generation(),
        }
    }

    /// Drops every recorded node. Outstanding [`Var`]s become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.generation = next_generation();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(
            v.generation, self.generation,
            "variable belongs to another tape or a cleared one"
        );
        v.index
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite forward value in {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            index: self.nodes.len() - 1,
            generation: self.generation,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.idx(v)].requires_grad
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Unnamed differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a named parameter from `store`. Repeated calls with the same
    /// name return the same node so gradients accumulate in one place; a
    /// repeat whose value differs from the recorded one is an error.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let stored = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        if let Some(&index) = self.params.get(name) {
            if self.nodes[index].value != *stored {
                return Err(TensorError::Contract(format!(
                    "parameter {name} changed since it was recorded; clear the tape first"
                )));
            }
            return Ok(Var {
                index,
                generation: self.generation,
            });
        }
        let value = stored.clone();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v.index);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (m, k) = av.dims2();
        let (k2, n) = bv.dims2();
        if k != k2 {
            return Err(shape_err("matmul", av, bv));
        }
        let out = Tensor::matrix(m, n, gemm(av.data(), bv.data(), m, k, n));
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(out, Op::MatMul(ia, ib), rg))
    }

    /// `a * b^T`, the natural form for `x W^T` with `W` stored `out x in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (m, k) = av.dims2();
        let (n, k2) = bv.dims2();
        if k != k2 {
            return Err(shape_err("matmul_nt", av, bv));
        }
        let out = Tensor::matrix(m, n, gemm_nt(av.data(), bv.data(), m, k, n));
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(out, Op::MatMulNt(ia, ib), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if av.dims2() != bv.dims2() {
            return Err(shape_err(name, av, bv));
        }
        let (m, n) = av.dims2();
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(Tensor::matrix(m, n, data), op(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// Adds a row vector (`n` or `1 x n`) to every row of an `m x n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x), self.idx(bias));
        let (xv, bv) = (&self.nodes[ix].value, &self.nodes[ib].value);
        let (m, n) = xv.dims2();
        if bv.numel() != n {
            return Err(shape_err("add_row", xv, bv));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(ix) || self.rg(ib);
        Ok(self.push(Tensor::matrix(m, n, data), Op::AddRow(ix, ib), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let ix = self.idx(x);
        let (m, n) = self.nodes[ix].value.dims2();
        let data = self.nodes[ix].value.data().iter().map(|v| v * c).collect();
        let rg = self.rg(ix);
        self.push(Tensor::matrix(m, n, data), Op::Scale(ix, c), rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let ix = self.idx(x);
        let (m, n) = self.nodes[ix].value.dims2();
        let data = self.nodes[ix].value.data().iter().map(|v| v + c).collect();
        let rg = self.rg(ix);
        self.push(Tensor::matrix(m, n, data), Op::AddScalar(ix), rg)
    }

    /// Concatenates matrices along `axis` (0 = stack rows, 1 = join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(TensorError::Contract(format!(
                "concat needs at least one input and axis 0 or 1 (got axis {axis})"
            )));
        }
        let idxs: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect();
        let first = &self.nodes[idxs[0]].value;
        let (m0, n0) = first.dims2();
        for &i in &idxs[1..] {
            let (m, n) = self.nodes[i].value.dims2();
            if (axis == 0 && n != n0) || (axis == 1 && m != m0) {
                return Err(shape_err("concat", first, &self.nodes[i].value));
            }
        }
        let out = if axis == 0 {
            let mut data = Vec::new();
            let mut rows = 0;
            for &i in &idxs {
                data.extend_from_slice(self.nodes[i].value.data());
                rows += self.nodes[i].value.rows();
            }
            Tensor::matrix(rows, n0, data)
        } else {
            let total: usize = idxs.iter().map(|&i| self.nodes[i].value.cols()).sum();
            let mut data = Vec::with_capacity(m0 * total);
            for r in 0..m0 {
                for &i in &idxs {
                    data.extend_from_slice(self.nodes[i].value.row(r));
                }
            }
            Tensor::matrix(m0, total, data)
        };
        let rg = idxs.iter().any(|&i| self.rg(i));
        Ok(self.push(out, Op::Concat { inputs: idxs, axis }, rg))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        let (m, n) = xv.dims2();
        if len == 0 || start + len > n {
            return Err(TensorError::Contract(format!(
                "slice_cols {start}..{} out of range for {n} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let rg = self.rg(ix);
        Ok(self.push(Tensor::matrix(m, len, data), Op::SliceCols { x: ix, start }, rg))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        let (m, n) = xv.dims2();
        if indices.is_empty() || indices.iter().any(|&r| r >= m) {
            return Err(TensorError::Contract(format!(
                "gather_rows indices {indices:?} invalid for {m} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &r in indices {
            data.extend_from_slice(xv.row(r));
        }
        let rg = self.rg(ix);
        let out = Tensor::matrix(indices.len(), n, data);
        Ok(self.push(
            out,
            Op::GatherRows {
                x: ix,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        let (m, n) = xv.dims2();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = xv.data()[i * n + j];
            }
        }
        let rg = self.rg(ix);
        self.push(Tensor::matrix(n, m, data), Op::Transpose(ix), rg)
    }

    /// Mean over rows (`axis = 0`, gives `1 x n`) or columns (`axis = 1`, gives `m x 1`).
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        let (m, n) = xv.dims2();
        let out = match axis {
            0 => {
                let mut acc = vec![0.0; n];
                for r in 0..m {
                    for (a, &v) in acc.iter_mut().zip(xv.row(r)) {
                        *a += v;
                    }
                }
                Tensor::matrix(1, n, acc.into_iter().map(|a| a / m as f64).collect())
            }
            1 => Tensor::matrix(
                m,
                1,
                (0..m).map(|r| xv.row(r).iter().sum::<f64>() / n as f64).collect(),
            ),
            _ => {
                return Err(TensorError::Contract(format!(
                    "mean_axis axis must be 0 or 1, got {axis}"
                )))
            }
        };
        let rg = self.rg(ix);
        Ok(self.push(out, Op::MeanAxis { x: ix, axis }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let s = self.nodes[ix].value.sum();
        let rg = self.rg(ix);
        self.push(Tensor::scalar(s), Op::SumAll(ix), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let v = &self.nodes[ix].value;
        let s = v.sum() / v.numel() as f64;
        let rg = self.rg(ix);
        self.push(Tensor::scalar(s), Op::MeanAll(ix), rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ix = self.idx(x);
        let (m, n) = self.nodes[ix].value.dims2();
        let data = self.nodes[ix].value.data().iter().map(|&v| f(v)).collect();
        let rg = self.rg(ix);
        self.push(Tensor::matrix(m, n, data), op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        self.unary(x, |v| v.max(0.0), Op::Relu(ix))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let ix = self.idx(x);
        self.unary(
            x,
            move |v| if v > 0.0 { v } else { slope * v },
            Op::LeakyRelu(ix, slope),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        self.unary(x, f64::tanh, Op::Tanh(ix))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        self.unary(x, sigmoid, Op::Sigmoid(ix))
    }

    /// Natural log with the input clamped below at [`LOG_CLAMP`].
    pub fn log(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        self.unary(x, |v| v.max(LOG_CLAMP).ln(), Op::Log(ix))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        self.unary(x, f64::exp, Op::Exp(ix))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        let (m, n) = xv.dims2();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            data.extend(softmax(xv.row(r)));
        }
        let rg = self.rg(ix);
        self.push(Tensor::matrix(m, n, data), Op::SoftmaxRows(ix), rg)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        let (m, n) = xv.dims2();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            data.extend(log_softmax(xv.row(r)));
        }
        let rg = self.rg(ix);
        self.push(Tensor::matrix(m, n, data), Op::LogSoftmaxRows(ix), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let il = self.idx(loss);
        let lv = &self.nodes[il].value;
        if lv.numel() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[il] = Some(vec![1.0]);

        for i in (0..=il).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, node)| {
                    g.map(|d| {
                        let (m, n) = node.value.dims2();
                        Tensor::matrix(m, n, d)
                    })
                })
                .collect(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.clone(),
            generation: self.generation,
        })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let (m, n) = out.dims2();
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, d: Vec<f64>| {
            if !self.nodes[j].requires_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => {
                    for (e, v) in existing.iter_mut().zip(d) {
                        *e += v;
                    }
                }
                slot @ None => *slot = Some(d),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (_, k) = val(*a).dims2();
                if self.rg(*a) {
                    acc(*a, gemm_nt(g, val(*b).data(), m, n, k));
                }
                if self.rg(*b) {
                    acc(*b, gemm_tn(val(*a).data(), g, m, k, n));
                }
            }
            Op::MatMulNt(a, b) => {
                // out = a b^T, a: m x k, b: n x k
                let (_, k) = val(*a).dims2();
                if self.rg(*a) {
                    acc(*a, gemm(g, val(*b).data(), m, n, k));
                }
                if self.rg(*b) {
                    acc(*b, gemm_tn(g, val(*a).data(), m, n, k));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                acc(*a, g.iter().zip(bv).map(|(d, y)| d * y).collect());
                acc(*b, g.iter().zip(av).map(|(d, x)| d * x).collect());
            }
            Op::AddRow(x, b) => {
                acc(*x, g.to_vec());
                let mut db = vec![0.0; n];
                for row in g.chunks(n) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*b, db);
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|d| d * c).collect()),
            Op::AddScalar(x) => acc(*x, g.to_vec()),
            Op::Concat { inputs, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &j in inputs {
                        let len = val(j).numel();
                        acc(j, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                } else {
                    let mut col = 0;
                    for &j in inputs {
                        let w = val(j).cols();
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&g[r * n + col..r * n + col + w]);
                        }
                        acc(j, d);
                        col += w;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (xm, xn) = val(*x).dims2();
                let mut d = vec![0.0; xm * xn];
                for r in 0..m {
                    d[r * xn + start..r * xn + start + n].copy_from_slice(&g[r * n..(r + 1) * n]);
                }
                acc(*x, d);
            }
            Op::GatherRows { x, indices } => {
                let (xm, xn) = val(*x).dims2();
                let mut d = vec![0.0; xm * xn];
                for (r, &src) in indices.iter().enumerate() {
                    for c in 0..xn {
                        d[src * xn + c] += g[r * xn + c];
                    }
                }
                acc(*x, d);
            }
            Op::Transpose(x) => {
                // out is m x n, input is n x m
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        d[c * m + r] = g[r * n + c];
                    }
                }
                acc(*x, d);
            }
            Op::MeanAxis { x, axis } => {
                let (xm, xn) = val(*x).dims2();
                let mut d = vec![0.0; xm * xn];
                for r in 0..xm {
                    for c in 0..xn {
                        d[r * xn + c] = if *axis == 0 {
                            g[c] / xm as f64
                        } else {
                            g[r] / xn as f64
                        };
                    }
                }
                acc(*x, d);
            }
            Op::SumAll(x) => acc(*x, vec![g[0]; val(*x).numel()]),
            Op::MeanAll(x) => {
                let k = val(*x).numel();
                acc(*x, vec![g[0] / k as f64; k]);
            }
            Op::Relu(x) => acc(
                *x,
                g.iter()
                    .zip(val(*x).data())
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect(),
            ),
            Op::LeakyRelu(x, slope) => acc(
                *x,
                g.iter()
                    .zip(val(*x).data())
                    .map(|(d, &v)| if v > 0.0 { *d } else { d * slope })
                    .collect(),
            ),
            Op::Tanh(x) => acc(
                *x,
                g.iter()
                    .zip(out.data())
                    .map(|(d, y)| d * (1.0 - y * y))
                    .collect(),
            ),
            Op::Sigmoid(x) => acc(
                *x,
                g.iter()
                    .zip(out.data())
                    .map(|(d, y)| d * y * (1.0 - y))
                    .collect(),
            ),
            Op::Log(x) => acc(
                *x,
                g.iter()
                    .zip(val(*x).data())
                    .map(|(d, &v)| if v > LOG_CLAMP { d / v } else { 0.0 })
                    .collect(),
            ),
            Op::Exp(x) => acc(*x, g.iter().zip(out.data()).map(|(d, y)| d * y).collect()),
            Op::SoftmaxRows(x) => {
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    let y = out.row(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        d[r * n + c] = y[c] * (gr[c] - dot);
                    }
                }
                acc(*x, d);
            }
            Op::LogSoftmaxRows(x) => {
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    let y = out.row(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let total: f64 = gr.iter().sum();
                    for c in 0..n {
                        d[r * n + c] = gr[c] - y[c].exp() * total;
                    }
                }
                acc(*x, d);
            }
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: HashMap<String, usize>,
    generation: u64,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        assert_eq!(v.generation, self.generation, "variable from another tape");
        self.grads[v.index]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.index]))
    }

    /// Gradient for a named parameter registered on the tape.
    pub fn param(&self, name: &str) -> Option<Tensor> {
        let &i = self.params.get(name)?;
        let mut g = self.grads[i]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[i]));
        // keep the parameter's own shape (e.g. 1-D biases)
        g = Tensor::new(self.shapes[i].clone(), g.into_data()).expect("same numel");
        Some(g)
    }

    /// Gradients for every entry of `store`, zero for parameters that were
    /// never used or do not reach the loss.
    pub fn for_store(&self, store: &ParamStore) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, value) in store.iter() {
            let g = self
                .param(name)
                .unwrap_or_else(|| Tensor::zeros(value.shape()));
            out.insert(name, g);
        }
        out
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}
