//! Wengert tape: reverse-mode automatic differentiation over dense tensors.
//!
//! Operations record nodes during the forward pass; `backward` replays them
//! in reverse topological order (construction order is already topological)
//! and accumulates vector-Jacobian products. A value referenced k times
//! receives k gradient contributions by summation.
//!
//! Gradient tracking is opt-in per tensor: only `param` leaves and nodes
//! derived from them carry gradients. Dataset tensors enter as `leaf`
//! (untracked) and cost nothing during backward.

use super::tensor::Tensor;
use super::NumericError;

pub type TensorId = usize;

type Result<T> = std::result::Result<T, NumericError>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Div { a: TensorId, b: TensorId },
    Concat { parts: Vec<TensorId>, axis: usize },
    Transpose { a: TensorId },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    Relu { a: TensorId },
    Softplus { a: TensorId },
    Sqrt { a: TensorId },
    /// Softmax along `axis`; `support` (saved forward context) restricts each
    /// lane to a subset of entries, with empty lanes producing zeros.
    Softmax {
        a: TensorId,
        axis: usize,
        support: Option<Vec<bool>>,
    },
    /// Per-row normalization over the last axis (no affine).
    LayerNorm { a: TensorId, eps: f64 },
    Sum { a: TensorId, axis: Option<usize> },
    Mean { a: TensorId, axis: Option<usize> },
    Abs { a: TensorId },
    Log { a: TensorId },
    Square { a: TensorId },
    Broadcast { a: TensorId, from: Vec<usize> },
    Slice {
        a: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape { a: TensorId },
}

impl Op {
    fn parents(&self) -> Vec<TensorId> {
        match self {
            Op::Leaf => vec![],
            Op::Matmul { a, b }
            | Op::Add { a, b }
            | Op::Sub { a, b }
            | Op::Mul { a, b }
            | Op::Div { a, b } => vec![*a, *b],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Transpose { a }
            | Op::Sigmoid { a }
            | Op::Tanh { a }
            | Op::Relu { a }
            | Op::Softplus { a }
            | Op::Sqrt { a }
            | Op::Softmax { a, .. }
            | Op::LayerNorm { a, .. }
            | Op::Sum { a, .. }
            | Op::Mean { a, .. }
            | Op::Abs { a }
            | Op::Log { a }
            | Op::Square { a }
            | Op::Broadcast { a, .. }
            | Op::Slice { a, .. }
            | Op::Reshape { a } => vec![*a],
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Gradients keyed by tensor id after a `backward` pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to tensor `id`, if any
    /// gradient flowed to it.
    pub fn get(&self, id: TensorId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or zeros of the given shape when none flowed.
    pub fn get_or_zeros(&self, id: TensorId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

/// Recording tape. One tape per forward/backward episode; independent tapes
/// may run on separate threads.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_scalar(x: f64) -> f64 {
    // log(1 + e^x) with the overflow-safe branch for large |x|.
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Right-aligned broadcast join of two shapes, if compatible.
fn broadcast_join(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da != db && da != 1 && db != 1 {
            return None;
        }
        out[i] = da.max(db);
    }
    Some(out)
}

/// Expand `values` of `from` shape into `to` shape (right-aligned, 1s expand).
fn broadcast_values(values: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let rank = to.len();
    let pad = rank - from.len();
    let mut from_full = vec![1usize; rank];
    from_full[pad..].copy_from_slice(from);

    let mut from_strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        from_strides[i] = if from_full[i] == 1 { 0 } else { acc };
        acc *= from_full[i];
    }

    let numel: usize = to.iter().product();
    let mut out = vec![0.0; numel];
    let mut idx = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src = 0;
        for i in 0..rank {
            src += idx[i] * from_strides[i];
        }
        *slot = values[src];
        for i in (0..rank).rev() {
            idx[i] += 1;
            if idx[i] < to[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    out
}

/// Sum a gradient of `from` shape back down to `to` shape (inverse of
/// `broadcast_values`).
fn reduce_broadcast(grad: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let rank = from.len();
    let pad = rank - to.len();
    let mut to_full = vec![1usize; rank];
    to_full[pad..].copy_from_slice(to);

    let mut to_strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        to_strides[i] = if to_full[i] == 1 { 0 } else { acc };
        acc *= to_full[i];
    }

    let numel: usize = to.iter().product();
    let mut out = vec![0.0; numel];
    let mut idx = vec![0usize; rank];
    for &g in grad {
        let mut dst = 0;
        for i in 0..rank {
            dst += idx[i] * to_strides[i];
        }
        out[dst] += g;
        for i in (0..rank).rev() {
            idx[i] += 1;
            if idx[i] < from[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    out
}

/// Lane iteration helper for axis-wise ops: (outer, len, inner) such that the
/// element j of lane (o, i) lives at (o * len + j) * inner + i.
fn lane_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Untracked input (dataset tensors, frozen noise, masks).
    pub fn leaf(&mut self, value: Tensor) -> TensorId {
        self.push(Op::Leaf, value, false)
    }

    /// Tracked parameter leaf; receives a gradient from `backward`.
    pub fn param(&mut self, value: Tensor) -> TensorId {
        self.push(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, v: f64) -> TensorId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id].value.shape()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> TensorId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn push_checked(&mut self, name: &'static str, op: Op, value: Tensor) -> Result<TensorId> {
        if !value.all_finite() {
            return Err(NumericError::NonFinite { op: name });
        }
        let requires_grad = op.parents().iter().any(|&p| self.nodes[p].requires_grad);
        Ok(self.push(op, value, requires_grad))
    }

    // ── binary elementwise (with implicit broadcast nodes) ──────────────

    fn elementwise(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId> {
        let join = broadcast_join(self.shape(a), self.shape(b)).ok_or_else(|| {
            NumericError::ShapeMismatch {
                op: name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            }
        })?;
        let a = self.broadcast_to(a, &join)?;
        let b = self.broadcast_to(b, &join)?;
        let values: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(join, values)?;
        self.push_checked(name, make(a, b), out)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.value(b).values().iter().any(|&y| y == 0.0) {
            return Err(NumericError::Domain {
                op: "div",
                reason: "zero divisor".into(),
            });
        }
        self.elementwise("div", a, b, |x, y| x / y, |a, b| Op::Div { a, b })
    }

    /// Multiply by a plain constant (records an untracked scalar leaf).
    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let k = self.constant(c);
        self.mul(a, k)
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let k = self.constant(c);
        self.add(a, k)
    }

    /// 1 - a, elementwise.
    pub fn one_minus(&mut self, a: TensorId) -> Result<TensorId> {
        let one = self.constant(1.0);
        self.sub(one, a)
    }

    // ── matmul / transpose ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; m * n];
        // ikj order keeps the inner loop contiguous in both operands.
        for i in 0..m {
            for p in 0..k {
                let aik = av[i * k + p];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        self.push_checked("matmul", Op::Matmul { a, b }, out)
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(NumericError::BadShape {
                op: "transpose",
                shape: sa.to_vec(),
                reason: "rank-2 required".into(),
            });
        }
        let (r, c) = (sa[0], sa[1]);
        let av = self.value(a).values();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], out)?;
        self.push_checked("transpose", Op::Transpose { a }, out)
    }

    // ── unary maps ───────────────────────────────────────────────────────

    fn unary(
        &mut self,
        name: &'static str,
        a: TensorId,
        f: impl Fn(f64) -> f64,
        make: impl Fn(TensorId) -> Op,
    ) -> Result<TensorId> {
        let values: Vec<f64> = self.value(a).values().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(self.shape(a).to_vec(), values)?;
        self.push_checked(name, make(a), out)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("sigmoid", a, sigmoid_scalar, |a| Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("tanh", a, f64::tanh, |a| Op::Tanh { a })
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("relu", a, |x| x.max(0.0), |a| Op::Relu { a })
    }

    pub fn softplus(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("softplus", a, softplus_scalar, |a| Op::Softplus { a })
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        if self.value(a).values().iter().any(|&x| x < 0.0) {
            return Err(NumericError::Domain {
                op: "sqrt",
                reason: "negative operand".into(),
            });
        }
        self.unary("sqrt", a, f64::sqrt, |a| Op::Sqrt { a })
    }

    pub fn abs(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("abs", a, f64::abs, |a| Op::Abs { a })
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        if self.value(a).values().iter().any(|&x| x <= 0.0) {
            return Err(NumericError::Domain {
                op: "log",
                reason: "non-positive operand".into(),
            });
        }
        self.unary("log", a, f64::ln, |a| Op::Log { a })
    }

    pub fn square(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("square", a, |x| x * x, |a| Op::Square { a })
    }

    // ── softmax / layer norm ─────────────────────────────────────────────

    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.softmax_impl(a, axis, None)
    }

    /// Softmax restricted to `support` (same numel as the input). Entries off
    /// support get 0; an all-false lane yields an all-zero lane.
    pub fn softmax_masked(
        &mut self,
        a: TensorId,
        axis: usize,
        support: Vec<bool>,
    ) -> Result<TensorId> {
        if support.len() != self.value(a).numel() {
            return Err(NumericError::BadShape {
                op: "softmax",
                shape: self.shape(a).to_vec(),
                reason: format!("support length {} mismatches input", support.len()),
            });
        }
        self.softmax_impl(a, axis, Some(support))
    }

    fn softmax_impl(
        &mut self,
        a: TensorId,
        axis: usize,
        support: Option<Vec<bool>>,
    ) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(NumericError::BadShape {
                op: "softmax",
                shape,
                reason: format!("axis {axis} out of range"),
            });
        }
        let (outer, len, inner) = lane_dims(&shape, axis);
        let av = self.value(a).values();
        let mut out = vec![0.0; av.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let on = |j: usize| support.as_ref().map_or(true, |s| s[idx(j)]);
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    if on(j) {
                        max = max.max(av[idx(j)]);
                    }
                }
                if max == f64::NEG_INFINITY {
                    continue; // empty lane stays zero
                }
                let mut denom = 0.0;
                for j in 0..len {
                    if on(j) {
                        let e = (av[idx(j)] - max).exp();
                        out[idx(j)] = e;
                        denom += e;
                    }
                }
                for j in 0..len {
                    if on(j) {
                        out[idx(j)] /= denom;
                    }
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        self.push_checked("softmax", Op::Softmax { a, axis, support }, out)
    }

    /// Normalize each row (last axis) to zero mean, unit variance; no affine.
    /// The 1e-5 epsilon is a degeneracy floor on the variance, so constant
    /// rows map to zeros instead of NaN and every other row comes out with
    /// exactly unit variance.
    pub fn layer_norm(&mut self, a: TensorId) -> Result<TensorId> {
        const EPS: f64 = 1e-5;
        let shape = self.shape(a).to_vec();
        let n = *shape.last().expect("non-empty shape");
        let av = self.value(a).values();
        let mut out = vec![0.0; av.len()];
        for row in 0..av.len() / n {
            let x = &av[row * n..(row + 1) * n];
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / var.max(EPS).sqrt();
            for j in 0..n {
                out[row * n + j] = (x[j] - mean) * inv;
            }
        }
        let out = Tensor::new(shape, out)?;
        self.push_checked("layer_norm", Op::LayerNorm { a, eps: EPS }, out)
    }

    // ── reductions ───────────────────────────────────────────────────────

    fn reduce(
        &mut self,
        name: &'static str,
        a: TensorId,
        axis: Option<usize>,
        mean: bool,
    ) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        let av = self.value(a).values();
        let (out_shape, values) = match axis {
            None => {
                let mut s = av.iter().sum::<f64>();
                if mean {
                    s /= av.len() as f64;
                }
                (vec![1], vec![s])
            }
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(NumericError::BadShape {
                        op: name,
                        shape,
                        reason: format!("axis {ax} out of range"),
                    });
                }
                let (outer, len, inner) = lane_dims(&shape, ax);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            out[o * inner + i] += av[(o * len + j) * inner + i];
                        }
                    }
                }
                if mean {
                    for v in out.iter_mut() {
                        *v /= len as f64;
                    }
                }
                let mut s = shape.clone();
                s[ax] = 1;
                (s, out)
            }
        };
        let out = Tensor::new(out_shape, values)?;
        let op = if mean { Op::Mean { a, axis } } else { Op::Sum { a, axis } };
        self.push_checked(name, op, out)
    }

    /// Full reduction to shape `[1]`.
    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        self.reduce("sum", a, None, false)
    }

    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        self.reduce("mean", a, None, true)
    }

    /// Axis reduction keeping the axis with size 1.
    pub fn sum_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce("sum", a, Some(axis), false)
    }

    pub fn mean_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce("mean", a, Some(axis), true)
    }

    // ── layout ops ───────────────────────────────────────────────────────

    pub fn broadcast_to(&mut self, a: TensorId, target: &[usize]) -> Result<TensorId> {
        if self.shape(a) == target {
            return Ok(a);
        }
        let from = self.shape(a).to_vec();
        if broadcast_join(&from, target) != Some(target.to_vec()) {
            return Err(NumericError::ShapeMismatch {
                op: "broadcast",
                lhs: from,
                rhs: target.to_vec(),
            });
        }
        let values = broadcast_values(self.value(a).values(), &from, target);
        let out = Tensor::new(target.to_vec(), values)?;
        self.push_checked("broadcast", Op::Broadcast { a, from }, out)
    }

    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(NumericError::Domain {
                op: "concat",
                reason: "no inputs".into(),
            });
        }
        let base = self.shape(parts[0]).to_vec();
        if axis >= base.len() {
            return Err(NumericError::BadShape {
                op: "concat",
                shape: base,
                reason: format!("axis {axis} out of range"),
            });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(i, (x, y))| i != axis && x != y)
            {
                return Err(NumericError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = lane_dims(&out_shape, axis);
        let numel: usize = out_shape.iter().product();
        let mut out = vec![0.0; numel];
        let mut offset = 0;
        for &p in parts {
            let len = self.shape(p)[axis];
            let pv = self.value(p).values();
            for o in 0..outer {
                for j in 0..len {
                    for i in 0..inner {
                        out[(o * total + offset + j) * inner + i] =
                            pv[(o * len + j) * inner + i];
                    }
                }
            }
            offset += len;
        }
        let out = Tensor::new(out_shape, out)?;
        self.push_checked(
            "concat",
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            out,
        )
    }

    pub fn slice(&mut self, a: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(NumericError::BadShape {
                op: "slice",
                shape,
                reason: format!("slice [{start}, {start}+{len}) on axis {axis}"),
            });
        }
        let (outer, full, inner) = lane_dims(&shape, axis);
        let av = self.value(a).values();
        let mut out = vec![0.0; outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[(o * len + j) * inner + i] = av[(o * full + start + j) * inner + i];
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, out)?;
        self.push_checked("slice", Op::Slice { a, axis, start, len }, out)
    }

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        let out = self.value(a).reshaped(shape.to_vec())?;
        self.push_checked("reshape", Op::Reshape { a }, out)
    }

    // ── backward ─────────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar output. Returns per-id gradients for
    /// every tracked tensor reachable from `out`.
    pub fn backward(&self, out: TensorId) -> Result<Gradients> {
        if !self.value(out).is_scalar() {
            return Err(NumericError::NonScalarBackward {
                shape: self.shape(out).to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out] = Some(vec![1.0]);

        for id in (0..=out).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_op(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|values| {
                    Tensor::new(self.shape(id).to_vec(), values).expect("gradient shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], id: TensorId, delta: &[f64]) {
        if !self.nodes[id].requires_grad {
            return;
        }
        match &mut grads[id] {
            Some(buf) => {
                for (b, d) in buf.iter_mut().zip(delta) {
                    *b += d;
                }
            }
            None => grads[id] = Some(delta.to_vec()),
        }
    }

    #[allow(clippy::too_many_lines)]
    fn backward_op(&self, id: TensorId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let av = self.value(*a).values();
                let bv = self.value(*b).values();
                if self.nodes[*a].requires_grad {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                da[i * k + p] += gij * bv[p * n + j];
                            }
                        }
                    }
                    self.accumulate(grads, *a, &da);
                }
                if self.nodes[*b].requires_grad {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, g);
                if self.nodes[*b].requires_grad {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    self.accumulate(grads, *b, &neg);
                }
            }
            Op::Mul { a, b } => {
                if self.nodes[*a].requires_grad {
                    let bv = self.value(*b).values();
                    let da: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, &da);
                }
                if self.nodes[*b].requires_grad {
                    let av = self.value(*a).values();
                    let db: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Div { a, b } => {
                let bv = self.value(*b).values();
                if self.nodes[*a].requires_grad {
                    let da: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x / y).collect();
                    self.accumulate(grads, *a, &da);
                }
                if self.nodes[*b].requires_grad {
                    let av = self.value(*a).values();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(av.iter().zip(bv))
                        .map(|(x, (n, d))| -x * n / (d * d))
                        .collect();
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Concat { parts, axis } => {
                let out_shape = self.shape(id);
                let (outer, total, inner) = lane_dims(out_shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis];
                    if self.nodes[p].requires_grad {
                        let mut dp = vec![0.0; self.value(p).numel()];
                        for o in 0..outer {
                            for j in 0..len {
                                for i in 0..inner {
                                    dp[(o * len + j) * inner + i] =
                                        g[(o * total + offset + j) * inner + i];
                                }
                            }
                        }
                        self.accumulate(grads, p, &dp);
                    }
                    offset += len;
                }
            }
            Op::Transpose { a } => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::Sigmoid { a } => {
                let y = self.value(id).values();
                let da: Vec<f64> = g.iter().zip(y).map(|(x, y)| x * y * (1.0 - y)).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Tanh { a } => {
                let y = self.value(id).values();
                let da: Vec<f64> = g.iter().zip(y).map(|(x, y)| x * (1.0 - y * y)).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Relu { a } => {
                let x = self.value(*a).values();
                let da: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Softplus { a } => {
                let x = self.value(*a).values();
                let da: Vec<f64> = g.iter().zip(x).map(|(g, x)| g * sigmoid_scalar(*x)).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Sqrt { a } => {
                let y = self.value(id).values();
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g / (2.0 * y)).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Softmax { a, axis, support } => {
                let shape = self.shape(id);
                let (outer, len, inner) = lane_dims(shape, *axis);
                let y = self.value(id).values();
                let mut da = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let on = |j: usize| support.as_ref().map_or(true, |s| s[idx(j)]);
                        let mut dot = 0.0;
                        for j in 0..len {
                            if on(j) {
                                dot += g[idx(j)] * y[idx(j)];
                            }
                        }
                        for j in 0..len {
                            if on(j) {
                                da[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::LayerNorm { a, eps } => {
                let shape = self.shape(id);
                let n = *shape.last().expect("non-empty shape");
                let x = self.value(*a).values();
                let y = self.value(id).values();
                let mut da = vec![0.0; x.len()];
                for row in 0..x.len() / n {
                    let xs = &x[row * n..(row + 1) * n];
                    let ys = &y[row * n..(row + 1) * n];
                    let gs = &g[row * n..(row + 1) * n];
                    let mean = xs.iter().sum::<f64>() / n as f64;
                    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let g_mean = gs.iter().sum::<f64>() / n as f64;
                    if var > *eps {
                        let inv = 1.0 / var.sqrt();
                        let gy_mean =
                            gs.iter().zip(ys).map(|(g, y)| g * y).sum::<f64>() / n as f64;
                        for j in 0..n {
                            da[row * n + j] = inv * (gs[j] - g_mean - ys[j] * gy_mean);
                        }
                    } else {
                        // floored branch: denominator is the constant sqrt(eps)
                        let inv = 1.0 / eps.sqrt();
                        for j in 0..n {
                            da[row * n + j] = inv * (gs[j] - g_mean);
                        }
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::Sum { a, axis } => {
                let da = self.spread_reduction(*a, *axis, g, 1.0);
                self.accumulate(grads, *a, &da);
            }
            Op::Mean { a, axis } => {
                let count = match axis {
                    None => self.value(*a).numel(),
                    Some(ax) => self.shape(*a)[*ax],
                };
                let da = self.spread_reduction(*a, *axis, g, 1.0 / count as f64);
                self.accumulate(grads, *a, &da);
            }
            Op::Abs { a } => {
                let x = self.value(*a).values();
                let da: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(g, x)| {
                        if *x > 0.0 {
                            *g
                        } else if *x < 0.0 {
                            -*g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Log { a } => {
                let x = self.value(*a).values();
                let da: Vec<f64> = g.iter().zip(x).map(|(g, x)| g / x).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Square { a } => {
                let x = self.value(*a).values();
                let da: Vec<f64> = g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Broadcast { a, from } => {
                let da = reduce_broadcast(g, self.shape(id), from);
                self.accumulate(grads, *a, &da);
            }
            Op::Slice { a, axis, start, len } => {
                let in_shape = self.shape(*a);
                let (outer, full, inner) = lane_dims(in_shape, *axis);
                let mut da = vec![0.0; self.value(*a).numel()];
                for o in 0..outer {
                    for j in 0..*len {
                        for i in 0..inner {
                            da[(o * full + start + j) * inner + i] =
                                g[(o * len + j) * inner + i];
                        }
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::Reshape { a } => {
                self.accumulate(grads, *a, g);
            }
        }
    }

    fn spread_reduction(
        &self,
        a: TensorId,
        axis: Option<usize>,
        g: &[f64],
        scale: f64,
    ) -> Vec<f64> {
        let in_shape = self.shape(a);
        match axis {
            None => vec![g[0] * scale; self.value(a).numel()],
            Some(ax) => {
                let (outer, len, inner) = lane_dims(in_shape, ax);
                let mut da = vec![0.0; self.value(a).numel()];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            da[(o * len + j) * inner + i] = g[o * inner + i] * scale;
                        }
                    }
                }
                da
            }
        }
    }
}
