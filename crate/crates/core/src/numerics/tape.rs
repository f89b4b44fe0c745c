//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and whatever it
//! needs for the backward pass. Node ids increase in creation order, so the
//! tape is already topologically sorted and `backward` walks it once in
//! reverse.

use super::tensor::{gelu, gelu_grad, sigmoid, Tensor};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of a trainable tensor inside a [`Params`] store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name `{name}`");
        self.names.push(name);
        self.tensors.push(tensor.with_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    AddRow(Var, Var),
    Transpose(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Sigmoid(Var),
    Softplus(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation: the ordered list of operations, their inputs, and
/// the values saved for differentiation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient for a parameter registered on the tape; zero when the loss does not depend on it.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &BTreeMap<ParamId, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }

    /// Gradient with respect to any node, `None` if the loss does not reach it.
    pub fn var(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }
}

pub const LAYERNORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite() || matches!(op, Op::Leaf));
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives a gradient only if asked for via [`Gradients::var`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a trainable tensor; `backward` reports a gradient for every registered id.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        let v = self.push(value.clone().with_grad(true), Op::Leaf);
        self.params.push((id, v));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// Element-wise product with a constant tensor (masks, loss weights).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let out = self.value(a).zip_map(&c, "mul_const", |x, y| x * y)?;
        Ok(self.push(out, Op::MulConst(a, c)))
    }

    /// Adds a length-`d` vector to every row of an `n×d` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        if self.shape(bias) != [d] {
            return Err(Error::shape("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone().with_grad(false);
        for r in 0..n {
            for (o, bv) in out.data_mut()[r * d..(r + 1) * d].iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.value(a).softmax(axis)?;
        Ok(self.push(out, Op::Softmax(a, axis)))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        let (outer, len, inner) = x.axis_split(axis)?;
        let mut out = x.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x.data()[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + (0..len).map(|j| (x.data()[idx(j)] - max).exp()).sum::<f64>().ln();
                for j in 0..len {
                    out[idx(j)] = x.data()[idx(j)] - lse;
                }
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(out, Op::LogSoftmax(a, axis)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(super::tensor::softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    /// Row-wise layer normalisation of an `n×d` matrix with affine `gain`/`bias` of length `d`.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::shape("layernorm", self.shape(x), self.shape(gain)));
        }
        let xs = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut normalized = vec![0.0; n * d];
        let mut out = vec![0.0; n * d];
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = xs.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                normalized[r * d + j] = xh;
                out[r * d + j] = xh * g[j] + b[j];
            }
        }
        let shape = xs.shape().to_vec();
        let out = Tensor::new(shape.clone(), out)?;
        let normalized = Tensor::new(shape, normalized)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, d) = self.value(a).dims2()?;
        if len == 0 || start + len > n {
            return Err(Error::Argument(format!(
                "slice_rows {start}..{} out of range for {n} rows",
                start + len
            )));
        }
        let data = self.value(a).data()[start * d..(start + len) * d].to_vec();
        let out = Tensor::new(vec![len, d], data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, d) = self.value(a).dims2()?;
        if len == 0 || start + len > d {
            return Err(Error::Argument(format!(
                "slice_cols {start}..{} out of range for {d} columns",
                start + len
            )));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&src[r * d + start..r * d + start + len]);
        }
        let out = Tensor::new(vec![n, len], data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let (_, d) = self.value(parts[0]).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if c != d {
                return Err(Error::shape("concat_rows", self.shape(parts[0]), self.shape(p)));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, d], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let (n, _) = self.value(parts[0]).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != n {
                return Err(Error::shape("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::new(vec![n, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Propagates d(loss)/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut params = BTreeMap::new();
        for &(id, v) in &self.params {
            let g = grads
                .get(v.0)
                .and_then(Option::as_ref)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(self.shape(v)));
            params
                .entry(id)
                .and_modify(|acc: &mut Tensor| acc.axpy(1.0, &g).expect("same parameter shape"))
                .or_insert(g);
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor| -> Result<()> {
            match &mut grads[v.0] {
                Some(existing) => existing.axpy(1.0, &delta),
                slot @ None => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(*a, g.matmul(&bv.transpose()?)?)?;
                acc(*b, av.transpose()?.matmul(g)?)?;
            }
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.map(|v| -v))?;
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), "mul", |x, y| x * y)?)?;
                acc(*b, g.zip_map(self.value(*a), "mul", |x, y| x * y)?)?;
            }
            Op::Scale(a, s) => acc(*a, g.map(|v| v * s))?,
            Op::MulConst(a, c) => acc(*a, g.zip_map(c, "mul_const", |x, y| x * y)?)?,
            Op::AddRow(x, bias) => {
                let (n, d) = g.dims2()?;
                let mut gb = vec![0.0; d];
                for r in 0..n {
                    for (acc_b, v) in gb.iter_mut().zip(g.row(r)) {
                        *acc_b += v;
                    }
                }
                acc(*x, g.clone())?;
                acc(*bias, Tensor::vector(gb))?;
            }
            Op::Transpose(a) => acc(*a, g.transpose()?)?,
            Op::Softmax(a, axis) => {
                let y = &node.value;
                let (outer, len, inner) = y.axis_split(*axis)?;
                let mut gx = vec![0.0; y.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g.data()[idx(j)] * y.data()[idx(j)]).sum();
                        for j in 0..len {
                            gx[idx(j)] = y.data()[idx(j)] * (g.data()[idx(j)] - dot);
                        }
                    }
                }
                acc(*a, Tensor::new(y.shape().to_vec(), gx)?)?;
            }
            Op::LogSoftmax(a, axis) => {
                let y = &node.value;
                let (outer, len, inner) = y.axis_split(*axis)?;
                let mut gx = vec![0.0; y.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let total: f64 = (0..len).map(|j| g.data()[idx(j)]).sum();
                        for j in 0..len {
                            gx[idx(j)] = g.data()[idx(j)] - y.data()[idx(j)].exp() * total;
                        }
                    }
                }
                acc(*a, Tensor::new(y.shape().to_vec(), gx)?)?;
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, "sigmoid", |gv, y| gv * y * (1.0 - y))?)?,
            Op::Softplus(a) => acc(*a, g.zip_map(self.value(*a), "softplus", |gv, x| gv * sigmoid(x))?)?,
            Op::Gelu(a) => acc(*a, g.zip_map(self.value(*a), "gelu", |gv, x| gv * gelu_grad(x))?)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (n, d) = g.dims2()?;
                let gain_v = self.value(*gain).data();
                let mut gx = vec![0.0; n * d];
                let mut ggain = vec![0.0; d];
                let mut gbias = vec![0.0; d];
                for r in 0..n {
                    let gr = g.row(r);
                    let xh = normalized.row(r);
                    let mut mean_gy = 0.0;
                    let mut mean_gy_xh = 0.0;
                    for j in 0..d {
                        let gy = gr[j] * gain_v[j];
                        mean_gy += gy;
                        mean_gy_xh += gy * xh[j];
                        ggain[j] += gr[j] * xh[j];
                        gbias[j] += gr[j];
                    }
                    mean_gy /= d as f64;
                    mean_gy_xh /= d as f64;
                    for j in 0..d {
                        let gy = gr[j] * gain_v[j];
                        gx[r * d + j] = inv_std[r] * (gy - mean_gy - xh[j] * mean_gy_xh);
                    }
                }
                acc(*x, Tensor::new(g.shape().to_vec(), gx)?)?;
                acc(*gain, Tensor::vector(ggain))?;
                acc(*bias, Tensor::vector(gbias))?;
            }
            Op::Sum(a) => acc(*a, Tensor::filled(self.shape(*a), g.item()))?,
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                acc(*a, Tensor::filled(self.shape(*a), g.item() / n))?;
            }
            Op::SliceRows(a, start) => {
                let mut full = Tensor::zeros(self.shape(*a));
                let (_, d) = full.dims2()?;
                full.data_mut()[start * d..start * d + g.numel()].copy_from_slice(g.data());
                acc(*a, full)?;
            }
            Op::SliceCols(a, start) => {
                let mut full = Tensor::zeros(self.shape(*a));
                let (n, d) = full.dims2()?;
                let (_, len) = g.dims2()?;
                for r in 0..n {
                    full.data_mut()[r * d + start..r * d + start + len].copy_from_slice(g.row(r));
                }
                acc(*a, full)?;
            }
            Op::ConcatRows(parts) => {
                let (_, d) = g.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    let piece = g.data()[offset..offset + n].to_vec();
                    offset += n;
                    let rows = n / d;
                    acc(p, Tensor::new(vec![rows, d], piece)?.reshape(self.shape(p))?)?;
                }
            }
            Op::ConcatCols(parts) => {
                let (n, total) = g.dims2()?;
                let mut start = 0;
                for &p in parts {
                    let (_, w) = self.value(p).dims2()?;
                    let mut piece = Vec::with_capacity(n * w);
                    for r in 0..n {
                        piece.extend_from_slice(&g.data()[r * total + start..r * total + start + w]);
                    }
                    start += w;
                    acc(p, Tensor::new(vec![n, w], piece)?.reshape(self.shape(p))?)?;
                }
            }
        }
        Ok(())
    }
}
