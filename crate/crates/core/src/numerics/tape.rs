//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Tape`] owns every tensor produced during one forward pass. Operations
//! append nodes and return [`VarId`]s; node inputs always refer to earlier
//! nodes, so creation order is a topological order and [`Tape::backward`]
//! walks it once in reverse.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    AddScalar(VarId, #[allow(dead_code)] f64),
    MulScalar(VarId, f64),
    Matmul(VarId, VarId),
    Affine { input: VarId, weight: VarId, bias: VarId },
    Relu(VarId),
    Silu(VarId),
    Tanh(VarId),
    Sigmoid(VarId),
    Softmax(VarId),
    LogSoftmax(VarId),
    Sum(VarId),
    Mean(VarId),
    MseLoss(VarId, VarId),
    KlDiv { log_target: VarId, log_pred: VarId },
    NllLoss { log_probs: VarId, labels: Vec<usize> },
    Concat(Vec<VarId>),
    Slice { input: VarId, start: usize, end: usize },
    Reshape(VarId),
    GatherRows { table: VarId, indices: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    /// True when some leaf with `requires_grad` feeds this node.
    grad_needed: bool,
}

/// Gradients of one backward pass, indexed by the forward pass's [`VarId`]s.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id`. Zero for any node the loss does not depend on.
    pub fn get(&self, id: VarId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[id.0].clone()),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, grad_needed: bool) -> VarId {
        self.nodes.push(Node { value, op, grad_needed });
        VarId(self.nodes.len() - 1)
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].grad_needed
    }

    /// Record an input tensor. Its `requires_grad` flag decides whether
    /// gradients flow back to it.
    pub fn leaf(&mut self, t: Tensor) -> VarId {
        let g = t.requires_grad;
        self.push(t, Op::Leaf, g)
    }

    // ── Elementwise ──────────────────────────────────────────────────────

    fn binary_same_shape(&mut self, op_name: &'static str, a: VarId, b: VarId) -> Result<()> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch { op: op_name, lhs: ta.shape.clone(), rhs: tb.shape.clone() });
        }
        Ok(())
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape("add", a, b)?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data, requires_grad: false }, Op::Add(a, b), g))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape("sub", a, b)?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data, requires_grad: false }, Op::Sub(a, b), g))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape("mul", a, b)?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data, requires_grad: false }, Op::Mul(a, b), g))
    }

    pub fn add_scalar(&mut self, a: VarId, c: f64) -> VarId {
        let t = &self.nodes[a.0].value;
        let out = Tensor { shape: t.shape.clone(), data: t.data.iter().map(|x| x + c).collect(), requires_grad: false };
        let g = self.needs(a);
        self.push(out, Op::AddScalar(a, c), g)
    }

    pub fn mul_scalar(&mut self, a: VarId, c: f64) -> VarId {
        let t = &self.nodes[a.0].value;
        let out = Tensor { shape: t.shape.clone(), data: t.data.iter().map(|x| x * c).collect(), requires_grad: false };
        let g = self.needs(a);
        self.push(out, Op::MulScalar(a, c), g)
    }

    // ── Linear algebra ───────────────────────────────────────────────────

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: ta.shape.clone(), rhs: tb.shape.clone() });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let data = kernels::matmul(&ta.data, &tb.data, m, k, n);
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape: vec![m, n], data, requires_grad: false }, Op::Matmul(a, b), g))
    }

    /// `input @ weight + bias`, with `bias` broadcast over rows.
    pub fn affine(&mut self, input: VarId, weight: VarId, bias: VarId) -> Result<VarId> {
        let (ti, tw, tb) = (&self.nodes[input.0].value, &self.nodes[weight.0].value, &self.nodes[bias.0].value);
        if ti.shape.len() != 2 || tw.shape.len() != 2 || ti.shape[1] != tw.shape[0] {
            return Err(Error::ShapeMismatch { op: "affine", lhs: ti.shape.clone(), rhs: tw.shape.clone() });
        }
        if tb.shape != vec![tw.shape[1]] {
            return Err(Error::ShapeMismatch { op: "affine(bias)", lhs: tb.shape.clone(), rhs: vec![tw.shape[1]] });
        }
        let (m, k, n) = (ti.shape[0], ti.shape[1], tw.shape[1]);
        let mut data = kernels::matmul(&ti.data, &tw.data, m, k, n);
        for row in data.chunks_exact_mut(n) {
            for (v, b) in row.iter_mut().zip(&tb.data) {
                *v += b;
            }
        }
        let g = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(Tensor { shape: vec![m, n], data, requires_grad: false }, Op::Affine { input, weight, bias }, g))
    }

    // ── Activations ──────────────────────────────────────────────────────

    fn unary(&mut self, a: VarId, f: impl Fn(f64) -> f64, op: Op) -> VarId {
        let t = &self.nodes[a.0].value;
        let out = Tensor { shape: t.shape.clone(), data: t.data.iter().map(|&x| f(x)).collect(), requires_grad: false };
        let g = self.needs(a);
        self.push(out, op, g)
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        self.unary(a, kernels::relu, Op::Relu(a))
    }

    pub fn silu(&mut self, a: VarId) -> VarId {
        self.unary(a, kernels::silu, Op::Silu(a))
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        self.unary(a, kernels::sigmoid, Op::Sigmoid(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: VarId) -> VarId {
        let t = &self.nodes[a.0].value;
        let data = kernels::softmax_rows(&t.data, t.width());
        let out = Tensor { shape: t.shape.clone(), data, requires_grad: false };
        let g = self.needs(a);
        self.push(out, Op::Softmax(a), g)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: VarId) -> VarId {
        let t = &self.nodes[a.0].value;
        let data = kernels::log_softmax_rows(&t.data, t.width());
        let out = Tensor { shape: t.shape.clone(), data, requires_grad: false };
        let g = self.needs(a);
        self.push(out, Op::LogSoftmax(a), g)
    }

    // ── Reductions and losses ────────────────────────────────────────────

    pub fn sum(&mut self, a: VarId) -> VarId {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let g = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: VarId) -> VarId {
        let t = &self.nodes[a.0].value;
        let s: f64 = t.data.iter().sum::<f64>() / t.numel() as f64;
        let g = self.needs(a);
        self.push(Tensor::scalar(s), Op::Mean(a), g)
    }

    /// Mean squared error over all elements.
    pub fn mse_loss(&mut self, pred: VarId, target: VarId) -> Result<VarId> {
        self.binary_same_shape("mse_loss", pred, target)?;
        let (tp, tt) = (&self.nodes[pred.0].value, &self.nodes[target.0].value);
        let n = tp.numel() as f64;
        let s: f64 = tp.data.iter().zip(&tt.data).map(|(a, b)| (a - b) * (a - b)).sum();
        let g = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(s / n), Op::MseLoss(pred, target), g))
    }

    /// Row-averaged KL divergence `KL(p ‖ q)` with both arguments given as
    /// log-probability rows: `mean_rows Σ_j exp(lt)·(lt − lp)`.
    pub fn kl_div(&mut self, log_target: VarId, log_pred: VarId) -> Result<VarId> {
        self.binary_same_shape("kl_div", log_target, log_pred)?;
        let (tt, tp) = (&self.nodes[log_target.0].value, &self.nodes[log_pred.0].value);
        let rows = tt.rows() as f64;
        let s: f64 = tt
            .data
            .iter()
            .zip(&tp.data)
            .map(|(lt, lp)| lt.exp() * (lt - lp))
            .sum();
        let g = self.needs(log_target) || self.needs(log_pred);
        Ok(self.push(Tensor::scalar(s / rows), Op::KlDiv { log_target, log_pred }, g))
    }

    /// Negative log likelihood over log-probability rows: `-mean_i lp[i, labels[i]]`.
    pub fn nll_loss(&mut self, log_probs: VarId, labels: &[usize]) -> Result<VarId> {
        let t = &self.nodes[log_probs.0].value;
        let (n, k) = (t.rows(), t.width());
        if labels.len() != n {
            return Err(Error::InvalidArgument {
                op: "nll_loss",
                msg: format!("{} label(s) for {} row(s)", labels.len(), n),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::InvalidArgument { op: "nll_loss", msg: format!("label {} out of range [0, {})", bad, k) });
        }
        let s: f64 = labels.iter().enumerate().map(|(i, &y)| t.data[i * k + y]).sum();
        let g = self.needs(log_probs);
        Ok(self.push(
            Tensor::scalar(-s / n as f64),
            Op::NllLoss { log_probs, labels: labels.to_vec() },
            g,
        ))
    }

    // ── Shape ops ────────────────────────────────────────────────────────

    /// Concatenate along the last axis; all inputs must agree on row count.
    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument { op: "concat", msg: "no inputs".into() });
        }
        let rows = self.nodes[parts[0].0].value.rows();
        for &p in parts {
            if self.nodes[p.0].value.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.nodes[parts[0].0].value.shape.clone(),
                    rhs: self.nodes[p.0].value.shape.clone(),
                });
            }
        }
        let total_w: usize = parts.iter().map(|&p| self.nodes[p.0].value.width()).sum();
        let mut data = Vec::with_capacity(rows * total_w);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor { shape: vec![rows, total_w], data, requires_grad: false },
            Op::Concat(parts.to_vec()),
            g,
        ))
    }

    /// Slice columns `[start, end)` of the last axis.
    pub fn slice(&mut self, a: VarId, start: usize, end: usize) -> Result<VarId> {
        let t = &self.nodes[a.0].value;
        let (rows, w) = (t.rows(), t.width());
        if start >= end || end > w {
            return Err(Error::InvalidArgument {
                op: "slice",
                msg: format!("range {}..{} invalid for width {}", start, end, w),
            });
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let g = self.needs(a);
        Ok(self.push(
            Tensor { shape: vec![rows, end - start], data, requires_grad: false },
            Op::Slice { input: a, start, end },
            g,
        ))
    }

    pub fn reshape(&mut self, a: VarId, shape: Vec<usize>) -> Result<VarId> {
        let t = &self.nodes[a.0].value;
        let numel: usize = shape.iter().product();
        if numel != t.numel() {
            return Err(Error::ShapeMismatch { op: "reshape", lhs: t.shape.clone(), rhs: shape });
        }
        let out = Tensor { shape, data: t.data.clone(), requires_grad: false };
        let g = self.needs(a);
        Ok(self.push(out, Op::Reshape(a), g))
    }

    /// Select rows of a `[R, W]` table by index; gradients scatter-add back.
    pub fn gather_rows(&mut self, table: VarId, indices: &[usize]) -> Result<VarId> {
        let t = &self.nodes[table.0].value;
        if t.shape.len() != 2 {
            return Err(Error::InvalidArgument { op: "gather_rows", msg: format!("table must be 2-d, got {:?}", t.shape) });
        }
        let (r, w) = (t.shape[0], t.shape[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::InvalidArgument { op: "gather_rows", msg: format!("row {} out of range [0, {})", bad, r) });
        }
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let g = self.needs(table);
        Ok(self.push(
            Tensor { shape: vec![indices.len(), w], data, requires_grad: false },
            Op::GatherRows { table, indices: indices.to_vec() },
            g,
        ))
    }

    // ── Backward ─────────────────────────────────────────────────────────

    /// Accumulate gradients of the scalar `loss` with respect to every
    /// grad-tracked node, visiting each node once in reverse creation order.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if !loss_node.value.is_scalar() {
            return Err(Error::NonScalarLoss { shape: loss_node.value.shape.clone() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].grad_needed {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape.clone()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn bump(&self, grads: &mut [Option<Tensor>], id: VarId, delta_shape: &[usize], delta: impl Iterator<Item = f64>) {
        if !self.nodes[id.0].grad_needed {
            return;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(delta_shape.to_vec()));
        }
        let acc = slot.as_mut().unwrap();
        for (a, d) in acc.data.iter_mut().zip(delta) {
            *a += d;
        }
    }

    fn accumulate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.bump(grads, *a, &g.shape, g.data.iter().cloned());
                self.bump(grads, *b, &g.shape, g.data.iter().cloned());
            }
            Op::Sub(a, b) => {
                self.bump(grads, *a, &g.shape, g.data.iter().cloned());
                self.bump(grads, *b, &g.shape, g.data.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                self.bump(grads, *a, &g.shape, g.data.iter().zip(&tb.data).map(|(v, y)| v * y));
                self.bump(grads, *b, &g.shape, g.data.iter().zip(&ta.data).map(|(v, x)| v * x));
            }
            Op::AddScalar(a, _) => {
                self.bump(grads, *a, &g.shape, g.data.iter().cloned());
            }
            Op::MulScalar(a, c) => {
                self.bump(grads, *a, &g.shape, g.data.iter().map(|v| v * c));
            }
            Op::Matmul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                if self.nodes[a.0].grad_needed {
                    let da = kernels::matmul_nt(&g.data, &tb.data, m, n, k);
                    self.bump(grads, *a, &ta.shape, da.into_iter());
                }
                if self.nodes[b.0].grad_needed {
                    let db = kernels::matmul_tn(&ta.data, &g.data, m, k, n);
                    self.bump(grads, *b, &tb.shape, db.into_iter());
                }
            }
            Op::Affine { input, weight, bias } => {
                let (ti, tw) = (&self.nodes[input.0].value, &self.nodes[weight.0].value);
                let (m, k, n) = (ti.shape[0], ti.shape[1], tw.shape[1]);
                if self.nodes[input.0].grad_needed {
                    let di = kernels::matmul_nt(&g.data, &tw.data, m, n, k);
                    self.bump(grads, *input, &ti.shape, di.into_iter());
                }
                if self.nodes[weight.0].grad_needed {
                    let dw = kernels::matmul_tn(&ti.data, &g.data, m, k, n);
                    self.bump(grads, *weight, &tw.shape, dw.into_iter());
                }
                if self.nodes[bias.0].grad_needed {
                    let mut db = vec![0.0; n];
                    for row in g.data.chunks_exact(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.bump(grads, *bias, &[n], db.into_iter());
                }
            }
            Op::Relu(a) => {
                let ta = &self.nodes[a.0].value;
                self.bump(grads, *a, &g.shape, g.data.iter().zip(&ta.data).map(|(v, &x)| if x > 0.0 { *v } else { 0.0 }));
            }
            Op::Silu(a) => {
                let ta = &self.nodes[a.0].value;
                let d = g.data.iter().zip(&ta.data).map(|(v, &x)| {
                    let s = kernels::sigmoid(x);
                    v * (s * (1.0 + x * (1.0 - s)))
                });
                self.bump(grads, *a, &g.shape, d);
            }
            Op::Tanh(a) => {
                let d = g.data.iter().zip(&node.value.data).map(|(v, &y)| v * (1.0 - y * y));
                self.bump(grads, *a, &g.shape, d);
            }
            Op::Sigmoid(a) => {
                let d = g.data.iter().zip(&node.value.data).map(|(v, &y)| v * y * (1.0 - y));
                self.bump(grads, *a, &g.shape, d);
            }
            Op::Softmax(a) => {
                // dx_i = y_i * (g_i - Σ_j g_j y_j), per row
                let w = node.value.width();
                let mut delta = Vec::with_capacity(g.data.len());
                for (grow, yrow) in g.data.chunks_exact(w).zip(node.value.data.chunks_exact(w)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(gv, yv)| gv * yv).sum();
                    delta.extend(grow.iter().zip(yrow).map(|(gv, yv)| yv * (gv - dot)));
                }
                self.bump(grads, *a, &g.shape, delta.into_iter());
            }
            Op::LogSoftmax(a) => {
                // dx = g - softmax(x) * rowsum(g)
                let w = node.value.width();
                let mut delta = Vec::with_capacity(g.data.len());
                for (grow, lrow) in g.data.chunks_exact(w).zip(node.value.data.chunks_exact(w)) {
                    let gsum: f64 = grow.iter().sum();
                    delta.extend(grow.iter().zip(lrow).map(|(gv, lv)| gv - lv.exp() * gsum));
                }
                self.bump(grads, *a, &g.shape, delta.into_iter());
            }
            Op::Sum(a) => {
                let ta = &self.nodes[a.0].value;
                let gv = g.item();
                self.bump(grads, *a, &ta.shape.clone(), std::iter::repeat(gv).take(ta.numel()));
            }
            Op::Mean(a) => {
                let ta = &self.nodes[a.0].value;
                let gv = g.item() / ta.numel() as f64;
                self.bump(grads, *a, &ta.shape.clone(), std::iter::repeat(gv).take(ta.numel()));
            }
            Op::MseLoss(p, t) => {
                let (tp, tt) = (&self.nodes[p.0].value, &self.nodes[t.0].value);
                let c = 2.0 * g.item() / tp.numel() as f64;
                self.bump(grads, *p, &tp.shape, tp.data.iter().zip(&tt.data).map(|(a, b)| c * (a - b)));
                self.bump(grads, *t, &tt.shape, tp.data.iter().zip(&tt.data).map(|(a, b)| -c * (a - b)));
            }
            Op::KlDiv { log_target, log_pred } => {
                let (tt, tp) = (&self.nodes[log_target.0].value, &self.nodes[log_pred.0].value);
                let c = g.item() / tt.rows() as f64;
                self.bump(grads, *log_pred, &tp.shape, tt.data.iter().map(|lt| -c * lt.exp()));
                self.bump(
                    grads,
                    *log_target,
                    &tt.shape,
                    tt.data.iter().zip(&tp.data).map(|(lt, lp)| c * lt.exp() * (lt - lp + 1.0)),
                );
            }
            Op::NllLoss { log_probs, labels } => {
                let tl = &self.nodes[log_probs.0].value;
                let (n, k) = (tl.rows(), tl.width());
                let c = -g.item() / n as f64;
                let mut delta = vec![0.0; tl.numel()];
                for (i, &y) in labels.iter().enumerate() {
                    delta[i * k + y] = c;
                }
                self.bump(grads, *log_probs, &tl.shape, delta.into_iter());
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total_w = node.value.width();
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.width();
                    if self.nodes[p.0].grad_needed {
                        let mut delta = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            let row = &g.data[r * total_w..(r + 1) * total_w];
                            delta.extend_from_slice(&row[offset..offset + w]);
                        }
                        self.bump(grads, p, &self.nodes[p.0].value.shape, delta.into_iter());
                    }
                    offset += w;
                }
            }
            Op::Slice { input, start, end } => {
                let ti = &self.nodes[input.0].value;
                let (rows, w) = (ti.rows(), ti.width());
                let sw = end - start;
                let mut delta = vec![0.0; ti.numel()];
                for r in 0..rows {
                    let src = &g.data[r * sw..(r + 1) * sw];
                    delta[r * w + start..r * w + end].copy_from_slice(src);
                }
                self.bump(grads, *input, &ti.shape, delta.into_iter());
            }
            Op::Reshape(a) => {
                let ta = &self.nodes[a.0].value;
                self.bump(grads, *a, &ta.shape.clone(), g.data.iter().cloned());
            }
            Op::GatherRows { table, indices } => {
                let tt = &self.nodes[table.0].value;
                let w = tt.shape[1];
                let mut delta = vec![0.0; tt.numel()];
                for (i, &row) in indices.iter().enumerate() {
                    for j in 0..w {
                        delta[row * w + j] += g.data[i * w + j];
                    }
                }
                self.bump(grads, *table, &tt.shape, delta.into_iter());
            }
        }
    }
}
