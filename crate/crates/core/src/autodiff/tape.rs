//! Reverse-mode differentiation tape over real tensors.
//!
//! Forward values are computed eagerly when an op is recorded; `backward`
//! walks the graph in reverse and produces a gradient for every registered
//! parameter. Complex quantities live on the tape as paired real tensors
//! (see `autodiff::complex`), so every op here is real-valued.

use super::tensor::{ew_binary, reduce_to_shape, row_major_strides, Tensor};
use crate::error::{CoreError, CoreResult};

pub type NodeId = usize;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEFF: f64 = 0.044715;

#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Scale(f64),
    Hadamard,
    Recip,
    Sqrt,
    Sin,
    Cos,
    Sigmoid,
    Gelu,
    SoftmaxLast,
    MatMul,
    Transpose(Vec<usize>),
    Reshape(Vec<usize>),
    Slice { axis: usize, start: usize, len: usize },
    Concat { axis: usize },
    Sum,
    MeanPool { axes: Vec<usize> },
    FrobNorm,
    /// log det of a real symmetric positive definite matrix (Cholesky).
    LogDetSpd,
    /// Real 2-D DFT over the last two axes, truncated to the non-negative
    /// half spectrum of the last axis: (..., R, C) -> (..., R, C/2+1, 2).
    Dft2Half,
    /// Inverse of `Dft2Half` from the Hermitian-extended half spectrum:
    /// (..., R, C/2+1, 2) -> (..., R, C).
    Idft2Half { cols: usize },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Flat registry of trainable parameters plus the recorded operation graph.
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
}

/// Per-node gradients produced by `backward`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn params(&self) -> &[(String, NodeId)] {
        &self.params
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, inputs, value });
        self.nodes.len() - 1
    }

    /// Registers a trainable parameter tensor.
    pub fn param(&mut self, name: &str, t: Tensor) -> NodeId {
        let id = self.push(Op::Leaf, Vec::new(), t);
        self.params.push((name.to_string(), id));
        id
    }

    /// Adds a constant leaf (not registered for gradients).
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, Vec::new(), t)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> CoreResult<NodeId> {
        let v = ew_binary(self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add, vec![a, b], v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> CoreResult<NodeId> {
        let v = ew_binary(self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(Op::Sub, vec![a, b], v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(c), vec![a], v)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> CoreResult<NodeId> {
        let v = ew_binary(self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Hadamard, vec![a, b], v))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip, vec![a], v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.sqrt());
        self.push(Op::Sqrt, vec![a], v)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sin);
        self.push(Op::Sin, vec![a], v)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::cos);
        self.push(Op::Cos, vec![a], v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid, vec![a], v)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| {
            0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x)).tanh())
        });
        self.push(Op::Gelu, vec![a], v)
    }

    pub fn softmax_last(&mut self, a: NodeId) -> CoreResult<NodeId> {
        let t = self.value(a);
        if t.shape().is_empty() {
            return Err(CoreError::dim("softmax needs at least one axis"));
        }
        let last = *t.shape().last().unwrap();
        let rows = t.numel() / last;
        let mut data = vec![0.0; t.numel()];
        for r in 0..rows {
            let row = &t.data()[r * last..(r + 1) * last];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (i, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                data[r * last + i] = e;
                denom += e;
            }
            for i in 0..last {
                data[r * last + i] /= denom;
            }
        }
        let v = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(Op::SoftmaxLast, vec![a], v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> CoreResult<NodeId> {
        let v = matmul_fwd(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul, vec![a, b], v))
    }

    pub fn transpose(&mut self, a: NodeId, perm: &[usize]) -> CoreResult<NodeId> {
        let t = self.value(a);
        if perm.len() != t.shape().len() {
            return Err(CoreError::dim("permutation rank mismatch"));
        }
        let v = permute(t, perm);
        Ok(self.push(Op::Transpose(perm.to_vec()), vec![a], v))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> CoreResult<NodeId> {
        let v = self.value(a).reshaped(shape.to_vec())?;
        Ok(self.push(Op::Reshape(self.value(a).shape().to_vec()), vec![a], v))
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> CoreResult<NodeId> {
        let t = self.value(a);
        if axis >= t.shape().len() || start + len > t.shape()[axis] {
            return Err(CoreError::dim(format!(
                "slice [{start}, {start}+{len}) on axis {axis} of {:?}",
                t.shape()
            )));
        }
        let v = slice_fwd(t, axis, start, len);
        Ok(self.push(Op::Slice { axis, start, len }, vec![a], v))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> CoreResult<NodeId> {
        if parts.is_empty() {
            return Err(CoreError::dim("concat of zero tensors"));
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(CoreError::dim("concat axis out of range"));
        }
        let mut total = 0usize;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len() {
                return Err(CoreError::dim("concat rank mismatch"));
            }
            for (i, (&x, &y)) in s.iter().zip(&first).enumerate() {
                if i != axis && x != y {
                    return Err(CoreError::dim("concat off-axis shape mismatch"));
                }
            }
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut out = Tensor::zeros(&out_shape);
        let mut offset = 0usize;
        for &p in parts {
            let t = self.value(p).clone();
            copy_into_axis(&mut out, &t, axis, offset);
            offset += t.shape()[axis];
        }
        Ok(self.push(Op::Concat { axis }, parts.to_vec(), out))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum, vec![a], v)
    }

    /// Mean over the given axes, keeping them as size-1 dims.
    pub fn mean_pool(&mut self, a: NodeId, axes: &[usize]) -> CoreResult<NodeId> {
        let t = self.value(a);
        for &ax in axes {
            if ax >= t.shape().len() {
                return Err(CoreError::dim("mean_pool axis out of range"));
            }
        }
        let v = mean_pool_fwd(t, axes);
        Ok(self.push(
            Op::MeanPool {
                axes: axes.to_vec(),
            },
            vec![a],
            v,
        ))
    }

    pub fn frob_norm(&mut self, a: NodeId) -> NodeId {
        let ss: f64 = self.value(a).data().iter().map(|x| x * x).sum();
        let v = Tensor::scalar(ss.sqrt());
        self.push(Op::FrobNorm, vec![a], v)
    }

    /// log det of a real SPD matrix via Cholesky; errors when the input is
    /// not positive definite.
    pub fn logdet_spd(&mut self, a: NodeId) -> CoreResult<NodeId> {
        let t = self.value(a);
        let n = match t.shape() {
            [n, m] if n == m => *n,
            other => {
                return Err(CoreError::dim(format!(
                    "logdet needs a square matrix, got {other:?}"
                )))
            }
        };
        let chol = cholesky_real(t.data(), n)?;
        let mut acc = 0.0;
        for i in 0..n {
            acc += chol[i * n + i].ln();
        }
        Ok(self.push(Op::LogDetSpd, vec![a], Tensor::scalar(2.0 * acc)))
    }

    pub fn dft2_half(&mut self, a: NodeId) -> CoreResult<NodeId> {
        let t = self.value(a);
        if t.shape().len() < 2 {
            return Err(CoreError::dim("dft2 needs at least two axes"));
        }
        let v = dft2_half_fwd(t)?;
        Ok(self.push(Op::Dft2Half, vec![a], v))
    }

    pub fn idft2_half(&mut self, a: NodeId, cols: usize) -> CoreResult<NodeId> {
        let t = self.value(a);
        if t.shape().len() < 3 || *t.shape().last().unwrap() != 2 {
            return Err(CoreError::dim("idft2 expects (..., R, C/2+1, 2)"));
        }
        let ch = t.shape()[t.shape().len() - 2];
        if cols / 2 + 1 != ch {
            return Err(CoreError::dim(format!(
                "half spectrum has {ch} bins, inconsistent with cols = {cols}"
            )));
        }
        let v = idft2_half_fwd(t, cols);
        Ok(self.push(Op::Idft2Half { cols }, vec![a], v))
    }

    /// Reverse-mode sweep from a scalar output node. Returns a gradient for
    /// every node; parameters are read off via [`Gradients::get`].
    pub fn backward(&self, output: NodeId) -> CoreResult<Gradients> {
        if output >= self.nodes.len() {
            return Err(CoreError::dim("backward output id out of range"));
        }
        if self.nodes[output].value.numel() != 1 {
            return Err(CoreError::dim("backward needs a scalar output"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output] = Some(Tensor::ones(self.nodes[output].value.shape()));
        for id in (0..=output).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            self.accumulate(node, id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        node: &Node,
        _id: NodeId,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> CoreResult<()> {
        let send = |target: NodeId, delta: Tensor, grads: &mut [Option<Tensor>]| {
            match &mut grads[target] {
                Some(acc) => {
                    let summed = ew_binary(acc, &delta, |x, y| x + y).expect("grad shapes agree");
                    *acc = summed;
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add => {
                let a = self.value(node.inputs[0]).shape().to_vec();
                let b = self.value(node.inputs[1]).shape().to_vec();
                send(node.inputs[0], reduce_to_shape(g, &a), grads);
                send(node.inputs[1], reduce_to_shape(g, &b), grads);
            }
            Op::Sub => {
                let a = self.value(node.inputs[0]).shape().to_vec();
                let b = self.value(node.inputs[1]).shape().to_vec();
                send(node.inputs[0], reduce_to_shape(g, &a), grads);
                let neg = g.map(|x| -x);
                send(node.inputs[1], reduce_to_shape(&neg, &b), grads);
            }
            Op::Scale(c) => {
                send(node.inputs[0], g.map(|x| c * x), grads);
            }
            Op::Hadamard => {
                let a = self.value(node.inputs[0]);
                let b = self.value(node.inputs[1]);
                let ga = ew_binary(g, b, |x, y| x * y)?;
                let gb = ew_binary(g, a, |x, y| x * y)?;
                send(node.inputs[0], reduce_to_shape(&ga, a.shape()), grads);
                send(node.inputs[1], reduce_to_shape(&gb, b.shape()), grads);
            }
            Op::Recip => {
                let x = self.value(node.inputs[0]);
                let gx = ew_binary(g, x, |gv, xv| -gv / (xv * xv))?;
                send(node.inputs[0], gx, grads);
            }
            Op::Sqrt => {
                let y = &node.value;
                let gx = ew_binary(g, y, |gv, yv| gv / (2.0 * yv))?;
                send(node.inputs[0], gx, grads);
            }
            Op::Sin => {
                let x = self.value(node.inputs[0]);
                let gx = ew_binary(g, x, |gv, xv| gv * xv.cos())?;
                send(node.inputs[0], gx, grads);
            }
            Op::Cos => {
                let x = self.value(node.inputs[0]);
                let gx = ew_binary(g, x, |gv, xv| -gv * xv.sin())?;
                send(node.inputs[0], gx, grads);
            }
            Op::Sigmoid => {
                let y = &node.value;
                let gx = ew_binary(g, y, |gv, yv| gv * yv * (1.0 - yv))?;
                send(node.inputs[0], gx, grads);
            }
            Op::Gelu => {
                let x = self.value(node.inputs[0]);
                let gx = ew_binary(g, x, |gv, xv| {
                    let u = SQRT_2_OVER_PI * (xv + GELU_COEFF * xv * xv * xv);
                    let t = u.tanh();
                    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * xv * xv);
                    gv * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du)
                })?;
                send(node.inputs[0], gx, grads);
            }
            Op::SoftmaxLast => {
                let y = &node.value;
                let last = *y.shape().last().unwrap();
                let rows = y.numel() / last;
                let mut gx = Tensor::zeros(y.shape());
                for r in 0..rows {
                    let yr = &y.data()[r * last..(r + 1) * last];
                    let gr = &g.data()[r * last..(r + 1) * last];
                    let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for i in 0..last {
                        gx.data_mut()[r * last + i] = yr[i] * (gr[i] - dot);
                    }
                }
                send(node.inputs[0], gx, grads);
            }
            Op::MatMul => {
                let a = self.value(node.inputs[0]);
                let b = self.value(node.inputs[1]);
                let (ga, gb) = matmul_bwd(a, b, g)?;
                send(node.inputs[0], ga, grads);
                send(node.inputs[1], gb, grads);
            }
            Op::Transpose(perm) => {
                let mut inv = vec![0usize; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                send(node.inputs[0], permute(g, &inv), grads);
            }
            Op::Reshape(orig) => {
                send(node.inputs[0], g.reshaped(orig.clone())?, grads);
            }
            Op::Slice { axis, start, len } => {
                let src = self.value(node.inputs[0]);
                let mut gx = Tensor::zeros(src.shape());
                add_into_axis(&mut gx, g, *axis, *start);
                let _ = len;
                send(node.inputs[0], gx, grads);
            }
            Op::Concat { axis } => {
                let mut offset = 0usize;
                for &inp in &node.inputs {
                    let len = self.value(inp).shape()[*axis];
                    let gx = slice_fwd(g, *axis, offset, len);
                    offset += len;
                    send(inp, gx, grads);
                }
            }
            Op::Sum => {
                let x = self.value(node.inputs[0]);
                send(node.inputs[0], Tensor::full(x.shape(), g.item()), grads);
            }
            Op::MeanPool { axes } => {
                let x = self.value(node.inputs[0]);
                let count: usize = axes.iter().map(|&a| x.shape()[a]).product();
                let scaled = g.map(|v| v / count as f64);
                // broadcast the kept-dims gradient back over the pooled axes
                let gx = ew_binary(&Tensor::zeros(x.shape()), &scaled, |_, y| y)?;
                send(node.inputs[0], gx, grads);
            }
            Op::FrobNorm => {
                let x = self.value(node.inputs[0]);
                let norm = node.value.item();
                let gv = g.item();
                let gx = if norm > 0.0 {
                    x.map(|v| gv * v / norm)
                } else {
                    Tensor::zeros(x.shape())
                };
                send(node.inputs[0], gx, grads);
            }
            Op::LogDetSpd => {
                let x = self.value(node.inputs[0]);
                let n = x.shape()[0];
                let inv = spd_inverse(x.data(), n)?;
                let gv = g.item();
                let gx = Tensor::new(x.shape().to_vec(), inv.iter().map(|&v| gv * v).collect())?;
                send(node.inputs[0], gx, grads);
            }
            Op::Dft2Half => {
                let x = self.value(node.inputs[0]);
                send(node.inputs[0], dft2_half_adj(g, x.shape()), grads);
            }
            Op::Idft2Half { cols } => {
                let x = self.value(node.inputs[0]);
                send(node.inputs[0], idft2_half_adj(g, x.shape(), *cols), grads);
            }
        }
        Ok(())
    }
}

fn permute(t: &Tensor, perm: &[usize]) -> Tensor {
    let in_shape = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = row_major_strides(in_shape);
    let mut out = Tensor::zeros(&out_shape);
    let rank = perm.len();
    let mut idx = vec![0usize; rank];
    for k in 0..t.numel() {
        let mut src = 0usize;
        for (ax, &p) in perm.iter().enumerate() {
            src += idx[ax] * in_strides[p];
        }
        out.data_mut()[k] = t.data()[src];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

fn slice_fwd(t: &Tensor, axis: usize, start: usize, len: usize) -> Tensor {
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let mut out = Tensor::zeros(&out_shape);
    let stride = shape[axis] * inner;
    for o in 0..outer {
        let src = o * stride + start * inner;
        let dst = o * len * inner;
        out.data_mut()[dst..dst + len * inner]
            .copy_from_slice(&t.data()[src..src + len * inner]);
    }
    out
}

fn copy_into_axis(out: &mut Tensor, part: &Tensor, axis: usize, offset: usize) {
    let shape = part.shape().to_vec();
    let out_axis = out.shape()[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    for o in 0..outer {
        let src = o * len * inner;
        let dst = (o * out_axis + offset) * inner;
        out.data_mut()[dst..dst + len * inner]
            .copy_from_slice(&part.data()[src..src + len * inner]);
    }
}

fn add_into_axis(out: &mut Tensor, part: &Tensor, axis: usize, offset: usize) {
    let shape = part.shape().to_vec();
    let out_axis = out.shape()[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    for o in 0..outer {
        let src = o * len * inner;
        let dst = (o * out_axis + offset) * inner;
        for i in 0..len * inner {
            out.data_mut()[dst + i] += part.data()[src + i];
        }
    }
}

fn mean_pool_fwd(t: &Tensor, axes: &[usize]) -> Tensor {
    let mut out_shape = t.shape().to_vec();
    for &a in axes {
        out_shape[a] = 1;
    }
    let count: usize = axes.iter().map(|&a| t.shape()[a]).product();
    let mut out = Tensor::zeros(&out_shape);
    let in_shape = t.shape();
    let out_strides = row_major_strides(&out_shape);
    let rank = in_shape.len();
    let mut idx = vec![0usize; rank];
    for k in 0..t.numel() {
        let mut dst = 0usize;
        for ax in 0..rank {
            if out_shape[ax] != 1 {
                dst += idx[ax] * out_strides[ax];
            }
        }
        out.data_mut()[dst] += t.data()[k];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < in_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out.map(|v| v / count as f64)
}

/// Batched matmul: (..., m, k) x (..., k, n). Batch dims must match exactly
/// or be absent on one side.
fn matmul_dims(a: &[usize], b: &[usize]) -> CoreResult<(Vec<usize>, usize, usize, usize)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CoreError::dim("matmul needs rank >= 2"));
    }
    let (m, ka) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, n) = (b[b.len() - 2], b[b.len() - 1]);
    if ka != kb {
        return Err(CoreError::dim(format!(
            "matmul inner dims {ka} vs {kb} (shapes {a:?} x {b:?})"
        )));
    }
    let ba = &a[..a.len() - 2];
    let bb = &b[..b.len() - 2];
    let batch = if ba == bb || bb.is_empty() {
        ba.to_vec()
    } else if ba.is_empty() {
        bb.to_vec()
    } else {
        return Err(CoreError::dim(format!(
            "matmul batch dims {ba:?} vs {bb:?}"
        )));
    };
    Ok((batch, m, ka, n))
}

fn matmul_fwd(a: &Tensor, b: &Tensor) -> CoreResult<Tensor> {
    let (batch, m, k, n) = matmul_dims(a.shape(), b.shape())?;
    let batch_count: usize = batch.iter().product();
    let a_batched = a.shape().len() > 2;
    let b_batched = b.shape().len() > 2;
    let mut out_shape = batch.clone();
    out_shape.push(m);
    out_shape.push(n);
    let mut out = Tensor::zeros(&out_shape);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for t in 0..batch_count {
        let ao = if a_batched { t * m * k } else { 0 };
        let bo = if b_batched { t * k * n } else { 0 };
        let oo = t * m * n;
        for i in 0..m {
            for kk in 0..k {
                let av = ad[ao + i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[bo + kk * n..bo + kk * n + n];
                let orow = &mut od[oo + i * n..oo + i * n + n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
    Ok(out)
}

fn matmul_bwd(a: &Tensor, b: &Tensor, g: &Tensor) -> CoreResult<(Tensor, Tensor)> {
    let (batch, m, k, n) = matmul_dims(a.shape(), b.shape())?;
    let batch_count: usize = batch.iter().product();
    let a_batched = a.shape().len() > 2;
    let b_batched = b.shape().len() > 2;
    let mut ga = Tensor::zeros(a.shape());
    let mut gb = Tensor::zeros(b.shape());
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    for t in 0..batch_count {
        let ao = if a_batched { t * m * k } else { 0 };
        let bo = if b_batched { t * k * n } else { 0 };
        let go = t * m * n;
        // ga += g . b^T
        for i in 0..m {
            for kk in 0..k {
                let mut acc = 0.0;
                let grow = &gd[go + i * n..go + i * n + n];
                let brow = &bd[bo + kk * n..bo + kk * n + n];
                for j in 0..n {
                    acc += grow[j] * brow[j];
                }
                ga.data_mut()[ao + i * k + kk] += acc;
            }
        }
        // gb += a^T . g
        for kk in 0..k {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += ad[ao + i * k + kk] * gd[go + i * n + j];
                }
                gb.data_mut()[bo + kk * n + j] += acc;
            }
        }
    }
    Ok((ga, gb))
}

/// Dense lower-triangular Cholesky of a real SPD matrix in row-major order.
fn cholesky_real(a: &[f64], n: usize) -> CoreResult<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(acc > 0.0) {
                    return Err(CoreError::numeric(
                        "logdet input is not positive definite",
                    ));
                }
                l[i * n + j] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of a real SPD matrix via its Cholesky factor.
fn spd_inverse(a: &[f64], n: usize) -> CoreResult<Vec<f64>> {
    let l = cholesky_real(a, n)?;
    let mut inv = vec![0.0; n * n];
    // solve L L^T x = e_j column by column
    for j in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = if i == j { 1.0 } else { 0.0 };
            for k in 0..i {
                acc -= l[i * n + k] * y[k];
            }
            y[i] = acc / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= l[k * n + i] * inv[k * n + j];
            }
            inv[i * n + j] = acc / l[i * n + i];
        }
    }
    Ok(inv)
}

fn dft2_half_fwd(t: &Tensor) -> CoreResult<Tensor> {
    let shape = t.shape();
    let rank = shape.len();
    let r = shape[rank - 2];
    let c = shape[rank - 1];
    if c % 2 != 0 {
        return Err(CoreError::dim("dft2_half needs an even last axis"));
    }
    let ch = c / 2 + 1;
    let batch: usize = shape[..rank - 2].iter().product();
    let mut out_shape = shape[..rank - 2].to_vec();
    out_shape.extend_from_slice(&[r, ch, 2]);
    let mut out = Tensor::zeros(&out_shape);
    let tau = std::f64::consts::TAU;
    for bi in 0..batch {
        let src = &t.data()[bi * r * c..(bi + 1) * r * c];
        let dst = &mut out.data_mut()[bi * r * ch * 2..(bi + 1) * r * ch * 2];
        for u in 0..r {
            for v in 0..ch {
                let mut acc_re = 0.0;
                let mut acc_im = 0.0;
                for mm in 0..r {
                    for q in 0..c {
                        let theta = tau
                            * ((u * mm) as f64 / r as f64 + (v * q) as f64 / c as f64);
                        let x = src[mm * c + q];
                        acc_re += x * theta.cos();
                        acc_im -= x * theta.sin();
                    }
                }
                dst[(u * ch + v) * 2] = acc_re;
                dst[(u * ch + v) * 2 + 1] = acc_im;
            }
        }
    }
    Ok(out)
}

fn dft2_half_adj(g: &Tensor, in_shape: &[usize]) -> Tensor {
    let rank = in_shape.len();
    let r = in_shape[rank - 2];
    let c = in_shape[rank - 1];
    let ch = c / 2 + 1;
    let batch: usize = in_shape[..rank - 2].iter().product();
    let mut out = Tensor::zeros(in_shape);
    let tau = std::f64::consts::TAU;
    for bi in 0..batch {
        let gd = &g.data()[bi * r * ch * 2..(bi + 1) * r * ch * 2];
        let dst = &mut out.data_mut()[bi * r * c..(bi + 1) * r * c];
        for mm in 0..r {
            for q in 0..c {
                let mut acc = 0.0;
                for u in 0..r {
                    for v in 0..ch {
                        let theta = tau
                            * ((u * mm) as f64 / r as f64 + (v * q) as f64 / c as f64);
                        acc += gd[(u * ch + v) * 2] * theta.cos()
                            - gd[(u * ch + v) * 2 + 1] * theta.sin();
                    }
                }
                dst[mm * c + q] = acc;
            }
        }
    }
    out
}

/// Weights for the Hermitian-extended inverse: interior bins count twice.
fn half_weight(v: usize, c: usize) -> f64 {
    if v == 0 || 2 * v == c {
        1.0
    } else {
        2.0
    }
}

fn idft2_half_fwd(t: &Tensor, c: usize) -> Tensor {
    let shape = t.shape();
    let rank = shape.len();
    let ch = shape[rank - 2];
    let r = shape[rank - 3];
    let batch: usize = shape[..rank - 3].iter().product();
    let mut out_shape = shape[..rank - 3].to_vec();
    out_shape.extend_from_slice(&[r, c]);
    let mut out = Tensor::zeros(&out_shape);
    let tau = std::f64::consts::TAU;
    let scale = 1.0 / (r * c) as f64;
    for bi in 0..batch {
        let src = &t.data()[bi * r * ch * 2..(bi + 1) * r * ch * 2];
        let dst = &mut out.data_mut()[bi * r * c..(bi + 1) * r * c];
        for mm in 0..r {
            for q in 0..c {
                let mut acc = 0.0;
                for u in 0..r {
                    for v in 0..ch {
                        let theta = tau
                            * ((u * mm) as f64 / r as f64 + (v * q) as f64 / c as f64);
                        let w = half_weight(v, c);
                        acc += w
                            * (src[(u * ch + v) * 2] * theta.cos()
                                - src[(u * ch + v) * 2 + 1] * theta.sin());
                    }
                }
                dst[mm * c + q] = scale * acc;
            }
        }
    }
    out
}

fn idft2_half_adj(g: &Tensor, in_shape: &[usize], c: usize) -> Tensor {
    let rank = in_shape.len();
    let ch = in_shape[rank - 2];
    let r = in_shape[rank - 3];
    let batch: usize = in_shape[..rank - 3].iter().product();
    let mut out = Tensor::zeros(in_shape);
    let tau = std::f64::consts::TAU;
    let scale = 1.0 / (r * c) as f64;
    for bi in 0..batch {
        let gd = &g.data()[bi * r * c..(bi + 1) * r * c];
        let dst = &mut out.data_mut()[bi * r * ch * 2..(bi + 1) * r * ch * 2];
        for u in 0..r {
            for v in 0..ch {
                let w = half_weight(v, c) * scale;
                let mut acc_re = 0.0;
                let mut acc_im = 0.0;
                for mm in 0..r {
                    for q in 0..c {
                        let theta = tau
                            * ((u * mm) as f64 / r as f64 + (v * q) as f64 / c as f64);
                        acc_re += gd[mm * c + q] * theta.cos();
                        acc_im -= gd[mm * c + q] * theta.sin();
                    }
                }
                dst[(u * ch + v) * 2] = w * acc_re;
                dst[(u * ch + v) * 2 + 1] = w * acc_im;
            }
        }
    }
    out
}
