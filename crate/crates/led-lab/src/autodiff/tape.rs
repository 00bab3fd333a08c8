//! Tape-based reverse-mode automatic differentiation.
//!
//! The tape records every operation of a forward pass in topological order.
//! `backward` walks the record in reverse, accumulating gradients exactly
//! once per node. Tensors are immutable after creation; a tape is rebuilt
//! per forward pass, which keeps data-dependent graphs (language-predicted
//! kernels) trivially correct.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use super::param::ParamData;

pub type NodeId = usize;

#[derive(Debug, thiserror::Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("rejected input: {0}")]
    RejectedInput(String),
    #[error("rejected configuration: {0}")]
    RejectedConfig(String),
}

pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &mut GradSink)>;

struct Node {
    size: usize,
    requires_grad: bool,
    backward: Option<BackwardFn>,
    param: Option<Rc<RefCell<ParamData>>>,
    grad: Option<Vec<f64>>,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Gradient accumulator handed to backward closures.
pub struct GradSink<'a> {
    grads: &'a mut Vec<Vec<f64>>,
    sizes: &'a [usize],
    requires: &'a [bool],
}

impl GradSink<'_> {
    #[inline]
    pub fn wants(&self, id: NodeId) -> bool {
        self.requires[id]
    }

    #[inline]
    fn buf(&mut self, id: NodeId) -> &mut [f64] {
        if self.grads[id].is_empty() {
            self.grads[id] = vec![0.0; self.sizes[id]];
        }
        &mut self.grads[id]
    }

    #[inline]
    pub fn add(&mut self, id: NodeId, index: usize, value: f64) {
        if self.requires[id] {
            self.buf(id)[index] += value;
        }
    }

    pub fn add_slice(&mut self, id: NodeId, values: &[f64]) {
        if self.requires[id] {
            let buf = self.buf(id);
            for (g, v) in buf.iter_mut().zip(values) {
                *g += v;
            }
        }
    }

    /// Accumulate into a contiguous range starting at `offset`.
    pub fn add_range(&mut self, id: NodeId, offset: usize, values: &[f64]) {
        if self.requires[id] {
            let buf = self.buf(id);
            for (g, v) in buf[offset..offset + values.len()].iter_mut().zip(values) {
                *g += v;
            }
        }
    }

    /// Mutable access for hot loops (conv kernels); caller checks `wants`.
    pub fn raw(&mut self, id: NodeId) -> &mut [f64] {
        self.buf(id)
    }
}

/// Handle to a value recorded on a tape.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TapeInner>>,
    id: NodeId,
    shape: Vec<usize>,
    values: Rc<Vec<f64>>,
    requires_grad: bool,
}

pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { inner: Rc::new(RefCell::new(TapeInner::default())) }
    }

    fn push(
        &self,
        shape: Vec<usize>,
        values: Vec<f64>,
        requires_grad: bool,
        backward: Option<BackwardFn>,
        param: Option<Rc<RefCell<ParamData>>>,
    ) -> Tensor {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            size: values.len(),
            requires_grad,
            backward,
            param,
            grad: None,
        });
        Tensor {
            inner: self.inner.clone(),
            id,
            shape,
            values: Rc::new(values),
            requires_grad,
        }
    }

    /// Constant leaf (no gradient).
    pub fn constant(&self, shape: &[usize], values: Vec<f64>) -> Tensor {
        self.push(shape.to_vec(), values, false, None, None)
    }

    pub fn zeros(&self, shape: &[usize]) -> Tensor {
        self.constant(shape, vec![0.0; shape.iter().product()])
    }

    /// Differentiable leaf; gradient readable via `Tensor::grad` after backward.
    pub fn leaf(&self, shape: &[usize], values: Vec<f64>) -> Tensor {
        self.push(shape.to_vec(), values, true, None, None)
    }

    /// Leaf bound to a persistent parameter; backward accumulates into
    /// `ParamData::grad`.
    pub fn param(&self, param: &Rc<RefCell<ParamData>>) -> Tensor {
        let (shape, values) = {
            let p = param.borrow();
            (p.shape.clone(), p.values.clone())
        };
        self.push(shape, values, true, None, Some(param.clone()))
    }

    /// Reverse traversal from `loss`, which must be scalar.
    pub fn backward(&self, loss: &Tensor) -> Result<(), AdError> {
        if loss.values.len() != 1 {
            return Err(AdError::RejectedInput(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape
            )));
        }
        if !Rc::ptr_eq(&self.inner, &loss.inner) {
            return Err(AdError::RejectedInput("loss is not on this tape".into()));
        }
        let mut inner = self.inner.borrow_mut();
        if inner.backward_done {
            return Err(AdError::RejectedInput(
                "tape already consumed by backward; reset before reuse".into(),
            ));
        }
        inner.backward_done = true;

        let n = inner.nodes.len();
        let sizes: Vec<usize> = inner.nodes.iter().map(|nd| nd.size).collect();
        let requires: Vec<bool> = inner.nodes.iter().map(|nd| nd.requires_grad).collect();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); n];
        grads[loss.id] = vec![1.0];

        for id in (0..=loss.id).rev() {
            if grads[id].is_empty() || !requires[id] {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            let node = &inner.nodes[id];
            if let Some(p) = &node.param {
                let mut p = p.borrow_mut();
                for (dst, src) in p.grad.iter_mut().zip(&g) {
                    *dst += src;
                }
            }
            if let Some(f) = &node.backward {
                let mut sink = GradSink { grads: &mut grads, sizes: &sizes, requires: &requires };
                f(&g, &mut sink);
            }
            inner.nodes[id].grad = Some(g);
        }
        Ok(())
    }

    /// Drop all recorded nodes so the tape can host a fresh forward pass.
    pub fn reset(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.clear();
        inner.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Tensor {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.values.len(), 1);
        self.values[0]
    }

    /// Gradient populated by the last `backward` on this tape.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().nodes[self.id].grad.clone()
    }

    fn tape(&self) -> Tape {
        Tape { inner: self.inner.clone() }
    }

    pub(crate) fn values_rc(&self) -> Rc<Vec<f64>> {
        self.values.clone()
    }

    /// Crate-internal constructor for ops defined outside this file.
    pub(crate) fn make(
        &self,
        shape: Vec<usize>,
        values: Vec<f64>,
        requires_grad: bool,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        self.tape().push(shape, values, requires_grad, backward, None)
    }

    fn unary(
        &self,
        shape: Vec<usize>,
        values: Vec<f64>,
        backward: impl Fn(&[f64], &mut GradSink) + 'static,
    ) -> Tensor {
        let req = self.requires_grad;
        self.tape().push(
            shape,
            values,
            req,
            if req { Some(Box::new(backward)) } else { None },
            None,
        )
    }

    fn binary(
        &self,
        other: &Tensor,
        shape: Vec<usize>,
        values: Vec<f64>,
        backward: impl Fn(&[f64], &mut GradSink) + 'static,
    ) -> Tensor {
        debug_assert!(Rc::ptr_eq(&self.inner, &other.inner), "tensors on different tapes");
        let req = self.requires_grad || other.requires_grad;
        self.tape().push(
            shape,
            values,
            req,
            if req { Some(Box::new(backward)) } else { None },
            None,
        )
    }

    // ── elementwise ──────────────────────────────────────────────────

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "add: shape mismatch");
        let vals: Vec<f64> =
            self.values.iter().zip(other.values.iter()).map(|(a, b)| a + b).collect();
        let (ia, ib) = (self.id, other.id);
        self.binary(other, self.shape.clone(), vals, move |g, sink| {
            sink.add_slice(ia, g);
            sink.add_slice(ib, g);
        })
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "sub: shape mismatch");
        let vals: Vec<f64> =
            self.values.iter().zip(other.values.iter()).map(|(a, b)| a - b).collect();
        let (ia, ib) = (self.id, other.id);
        self.binary(other, self.shape.clone(), vals, move |g, sink| {
            sink.add_slice(ia, g);
            if sink.wants(ib) {
                let buf = sink.raw(ib);
                for (dst, gv) in buf.iter_mut().zip(g) {
                    *dst -= gv;
                }
            }
        })
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "mul: shape mismatch");
        let vals: Vec<f64> =
            self.values.iter().zip(other.values.iter()).map(|(a, b)| a * b).collect();
        let (ia, ib) = (self.id, other.id);
        let (va, vb) = (self.values.clone(), other.values.clone());
        self.binary(other, self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += g[i] * vb[i];
                }
            }
            if sink.wants(ib) {
                let buf = sink.raw(ib);
                for i in 0..g.len() {
                    buf[i] += g[i] * va[i];
                }
            }
        })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let vals: Vec<f64> = self.values.iter().map(|v| v * c).collect();
        let ia = self.id;
        self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += g[i] * c;
                }
            }
        })
    }

    pub fn relu(&self) -> Tensor {
        let vals: Vec<f64> = self.values.iter().map(|v| v.max(0.0)).collect();
        let ia = self.id;
        let va = self.values.clone();
        self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    if va[i] > 0.0 {
                        buf[i] += g[i];
                    }
                }
            }
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        let vals: Vec<f64> = self.values.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let ia = self.id;
        let out = Rc::new(vals.clone());
        self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }
        })
    }

    pub fn tanh(&self) -> Tensor {
        let vals: Vec<f64> = self.values.iter().map(|v| v.tanh()).collect();
        let ia = self.id;
        let out = Rc::new(vals.clone());
        self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }
        })
    }

    pub fn sum(&self) -> Tensor {
        let total: f64 = self.values.iter().sum();
        let ia = self.id;
        let n = self.values.len();
        self.unary(vec![1], vec![total], move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for dst in buf.iter_mut().take(n) {
                    *dst += g[0];
                }
            }
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.values.len(),
            "reshape: element count mismatch"
        );
        let ia = self.id;
        self.unary(shape.to_vec(), self.values.as_ref().clone(), move |g, sink| {
            sink.add_slice(ia, g);
        })
    }

    // ── slicing / joining ────────────────────────────────────────────

    /// Contiguous sub-range along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor {
        assert!(axis < self.shape.len() && start + len <= self.shape[axis], "narrow out of range");
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let dim = self.shape[axis];
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let mut vals = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            vals.extend_from_slice(&self.values[base..base + len * inner]);
        }
        let ia = self.id;
        self.unary(out_shape, vals, move |g, sink| {
            if sink.wants(ia) {
                for o in 0..outer {
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    sink.add_range(ia, (o * dim + start) * inner, src);
                }
            }
        })
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(tensors: &[&Tensor], axis: usize) -> Tensor {
        assert!(!tensors.is_empty(), "concat of nothing");
        let first = tensors[0];
        let mut out_shape = first.shape.clone();
        let mut dim_total = 0;
        for t in tensors {
            assert_eq!(t.shape.len(), first.shape.len(), "concat: rank mismatch");
            for (ax, (a, b)) in t.shape.iter().zip(&first.shape).enumerate() {
                assert!(ax == axis || a == b, "concat: shape mismatch off-axis");
            }
            dim_total += t.shape[axis];
        }
        out_shape[axis] = dim_total;
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut vals = Vec::with_capacity(outer * dim_total * inner);
        for o in 0..outer {
            for t in tensors {
                let d = t.shape[axis];
                vals.extend_from_slice(&t.values[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let meta: Vec<(NodeId, usize)> = tensors.iter().map(|t| (t.id, t.shape[axis])).collect();
        let req = tensors.iter().any(|t| t.requires_grad);
        first.tape().push(
            out_shape,
            vals,
            req,
            if req {
                Some(Box::new(move |g: &[f64], sink: &mut GradSink| {
                    for o in 0..outer {
                        let mut off = o * dim_total * inner;
                        for &(id, d) in &meta {
                            let chunk = &g[off..off + d * inner];
                            sink.add_range(id, o * d * inner, chunk);
                            off += d * inner;
                        }
                    }
                }))
            } else {
                None
            },
            None,
        )
    }

    // ── dense / lookup ───────────────────────────────────────────────

    /// `w[M,N] · x[N] + b[M]`; pass `None` for a bias-free map.
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Tensor {
        assert_eq!(w.shape.len(), 2, "linear: weight must be 2-d");
        let (m, n) = (w.shape[0], w.shape[1]);
        assert_eq!(self.values.len(), n, "linear: input length mismatch");
        if let Some(b) = b {
            assert_eq!(b.values.len(), m, "linear: bias length mismatch");
        }
        let mut vals = vec![0.0; m];
        for (row, out) in vals.iter_mut().enumerate() {
            let wrow = &w.values[row * n..(row + 1) * n];
            let mut acc = 0.0;
            for (wv, xv) in wrow.iter().zip(self.values.iter()) {
                acc += wv * xv;
            }
            *out = acc + b.map_or(0.0, |b| b.values[row]);
        }
        let (ix, iw) = (self.id, w.id);
        let ib = b.map(|b| b.id);
        let (vx, vw) = (self.values.clone(), w.values.clone());
        let req = self.requires_grad || w.requires_grad || b.is_some_and(|b| b.requires_grad);
        self.tape().push(
            vec![m],
            vals,
            req,
            if req {
                Some(Box::new(move |g: &[f64], sink: &mut GradSink| {
                    if sink.wants(ix) {
                        let buf = sink.raw(ix);
                        for row in 0..m {
                            let gv = g[row];
                            if gv == 0.0 {
                                continue;
                            }
                            let wrow = &vw[row * n..(row + 1) * n];
                            for (dst, wv) in buf.iter_mut().zip(wrow) {
                                *dst += gv * wv;
                            }
                        }
                    }
                    if sink.wants(iw) {
                        let buf = sink.raw(iw);
                        for row in 0..m {
                            let gv = g[row];
                            if gv == 0.0 {
                                continue;
                            }
                            let dst = &mut buf[row * n..(row + 1) * n];
                            for (d, xv) in dst.iter_mut().zip(vx.iter()) {
                                *d += gv * xv;
                            }
                        }
                    }
                    if let Some(ib) = ib {
                        sink.add_slice(ib, g);
                    }
                }))
            } else {
                None
            },
            None,
        )
    }

    /// Rows of `table[V,E]` selected by token ids; gradients accumulate per row.
    pub fn embedding_lookup(table: &Tensor, ids: &[usize]) -> Tensor {
        assert_eq!(table.shape.len(), 2, "embedding table must be 2-d");
        let (v, e) = (table.shape[0], table.shape[1]);
        let mut vals = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            assert!(i < v, "token id {i} out of vocabulary range {v}");
            vals.extend_from_slice(&table.values[i * e..(i + 1) * e]);
        }
        let it = table.id;
        let ids = ids.to_vec();
        let req = table.requires_grad;
        table.tape().push(
            vec![ids.len(), e],
            vals,
            req,
            if req {
                Some(Box::new(move |g: &[f64], sink: &mut GradSink| {
                    for (t, &row) in ids.iter().enumerate() {
                        sink.add_range(it, row * e, &g[t * e..(t + 1) * e]);
                    }
                }))
            } else {
                None
            },
            None,
        )
    }

    // ── stochastic / normalization ───────────────────────────────────

    /// Inverted dropout: survivors scaled by 1/(1-p) in training,
    /// identity in evaluation mode.
    pub fn dropout(&self, p: f64, training: bool, rng: &mut impl Rng) -> Result<Tensor, AdError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AdError::RejectedConfig(format!("dropout p={p} outside [0,1)")));
        }
        if !training || p == 0.0 {
            let ia = self.id;
            return Ok(self.unary(self.shape.clone(), self.values.as_ref().clone(), move |g, sink| {
                sink.add_slice(ia, g);
            }));
        }
        let keep = 1.0 - p;
        let mask: Rc<Vec<f64>> = Rc::new(
            (0..self.values.len())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        );
        let vals: Vec<f64> = self.values.iter().zip(mask.iter()).map(|(v, m)| v * m).collect();
        let ia = self.id;
        let mask2 = mask.clone();
        Ok(self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += g[i] * mask2[i];
                }
            }
        }))
    }

    /// Softmax over the flattened tensor, max-subtracted for stability.
    pub fn softmax_flat(&self) -> Tensor {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.values.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let vals: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let ia = self.id;
        let out = Rc::new(vals.clone());
        self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let dot: f64 = g.iter().zip(out.iter()).map(|(gv, ov)| gv * ov).sum();
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += out[i] * (g[i] - dot);
                }
            }
        })
    }

    /// Log-softmax over the flattened tensor.
    pub fn log_softmax_flat(&self) -> Tensor {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = self.values.iter().map(|v| (v - max).exp()).sum();
        let lse = max + z.ln();
        let vals: Vec<f64> = self.values.iter().map(|v| v - lse).collect();
        let ia = self.id;
        let out = Rc::new(vals.clone());
        self.unary(self.shape.clone(), vals, move |g, sink| {
            if sink.wants(ia) {
                let gsum: f64 = g.iter().sum();
                let buf = sink.raw(ia);
                for i in 0..g.len() {
                    buf[i] += g[i] - out[i].exp() * gsum;
                }
            }
        })
    }

    /// KL(target ‖ exp(log_pred)) = Σ target·(ln target − log_pred),
    /// with 0·ln 0 = 0. `target` must be a distribution.
    pub fn kl_div(target: &Tensor, log_pred: &Tensor) -> Result<Tensor, AdError> {
        if target.values.len() != log_pred.values.len() {
            return Err(AdError::ShapeMismatch(format!(
                "kl_div: target has {} entries, log_pred {}",
                target.values.len(),
                log_pred.values.len()
            )));
        }
        let sum: f64 = target.values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || target.values.iter().any(|&t| t < 0.0) {
            return Err(AdError::RejectedInput(format!(
                "kl_div: target is not a distribution (sum={sum})"
            )));
        }
        let mut kl = 0.0;
        for (&t, &lp) in target.values.iter().zip(log_pred.values.iter()) {
            if t > 0.0 {
                kl += t * (t.ln() - lp);
            }
        }
        let ip = log_pred.id;
        let vt = target.values.clone();
        Ok(target.binary(log_pred, vec![1], vec![kl], move |g, sink| {
            if sink.wants(ip) {
                let buf = sink.raw(ip);
                for i in 0..vt.len() {
                    buf[i] -= g[0] * vt[i];
                }
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tape() -> Tape {
        Tape::new()
    }

    #[test]
    fn sum_backward_is_ones() {
        let t = tape();
        let x = t.leaf(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        let loss = x.sum();
        t.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn chained_linear_matches_matrix_oracle() {
        // loss = sum(A·(B·x)) ⇒ grad(x) = Bᵀ·Aᵀ·1
        let t = tape();
        let x = t.leaf(&[3], vec![0.5, -1.0, 2.0]);
        let bv = vec![1.0, 2.0, 3.0, -1.0, 0.5, 1.5]; // B: 2×3
        let av = vec![2.0, -1.0, 0.0, 4.0]; // A: 2×2
        let b = t.constant(&[2, 3], bv.clone());
        let a = t.constant(&[2, 2], av.clone());
        let loss = x.linear(&b, None).linear(&a, None).sum();
        t.backward(&loss).unwrap();
        let g = x.grad().unwrap();
        // oracle: Bᵀ (Aᵀ 1)
        let at1 = [av[0] + av[2], av[1] + av[3]];
        let expect: Vec<f64> = (0..3).map(|n| bv[n] * at1[0] + bv[3 + n] * at1[1]).collect();
        for (gv, ev) in g.iter().zip(&expect) {
            assert!((gv - ev).abs() < 1e-12, "{gv} vs {ev}");
        }
    }

    #[test]
    fn softmax_uniform_and_shift_invariance() {
        let t = tape();
        let x = t.leaf(&[5], vec![0.7; 5]);
        let s = x.softmax_flat();
        for v in s.values() {
            assert!((v - 0.2).abs() < 1e-12);
        }
        let logits = vec![0.3, -1.2, 2.0, 0.0];
        let a = t.constant(&[4], logits.clone());
        let b = t.constant(&[4], logits.iter().map(|v| v + 17.5).collect());
        let (sa, sb) = (a.softmax_flat(), b.softmax_flat());
        let sum: f64 = sa.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        for (x, y) in sa.values().iter().zip(sb.values()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn dropout_survivor_fraction_and_eval_identity() {
        let t = tape();
        let n = 1_000_000;
        let x = t.constant(&[n], vec![1.0; n]);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let y = x.dropout(0.5, true, &mut rng).unwrap();
        let survivors = y.values().iter().filter(|v| **v != 0.0).count() as f64 / n as f64;
        assert!((survivors - 0.5).abs() < 0.01, "survivor fraction {survivors}");
        // survivors are scaled by 2
        assert!(y.values().iter().all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-15));
        let z = x.dropout(0.5, false, &mut rng).unwrap();
        assert_eq!(z.values(), x.values());
        assert!(matches!(
            x.dropout(1.0, true, &mut rng),
            Err(AdError::RejectedConfig(_))
        ));
    }

    #[test]
    fn kl_div_cases() {
        let t = tape();
        // identical distributions ⇒ 0
        let p = [0.125, 0.5, 0.25, 0.125];
        let target = t.constant(&[4], p.to_vec());
        let log_pred = t.leaf(&[4], p.iter().map(|v| v.ln()).collect());
        let kl = Tensor::kl_div(&target, &log_pred).unwrap();
        assert!(kl.scalar().abs() < 1e-10);

        // delta target ⇒ −log_pred[j]
        let delta = t.constant(&[4], vec![0.0, 0.0, 1.0, 0.0]);
        let lp = t.constant(&[4], vec![-2.0, -1.0, -0.7, -3.0]);
        let kl = Tensor::kl_div(&delta, &lp).unwrap();
        assert!((kl.scalar() - 0.7).abs() < 1e-12);

        // random 8-cell case vs direct summation
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut tv: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = tv.iter().sum();
        tv.iter_mut().for_each(|v| *v /= s);
        let mut qv: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() + 0.1).collect();
        let qs: f64 = qv.iter().sum();
        qv.iter_mut().for_each(|v| *v /= qs);
        let expected: f64 =
            tv.iter().zip(&qv).map(|(&t, &q)| t * (t.ln() - q.ln())).sum();
        let target = t.constant(&[8], tv);
        let lp = t.constant(&[8], qv.iter().map(|v| v.ln()).collect());
        let got = Tensor::kl_div(&target, &lp).unwrap().scalar();
        assert!((got - expected).abs() < 1e-10);

        // non-normalized target rejected
        let bad = t.constant(&[2], vec![0.7, 0.7]);
        let lp = t.constant(&[2], vec![-0.5, -0.5]);
        assert!(Tensor::kl_div(&bad, &lp).is_err());
    }

    #[test]
    fn backward_rejects_non_scalar_and_double_use() {
        let t = tape();
        let x = t.leaf(&[3], vec![1.0, 2.0, 3.0]);
        assert!(t.backward(&x).is_err());
        let loss = x.sum();
        t.backward(&loss).unwrap();
        assert!(t.backward(&loss).is_err());
        t.reset();
        assert!(t.is_empty());
    }

    #[test]
    fn narrow_and_concat_round_trip() {
        let t = tape();
        let x = t.leaf(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = x.narrow(1, 0, 1);
        let b = x.narrow(1, 1, 2);
        let y = Tensor::concat(&[&a, &b], 1);
        assert_eq!(y.values(), x.values());
        let loss = y.mul(&y).sum();
        t.backward(&loss).unwrap();
        let g = x.grad().unwrap();
        for (gv, xv) in g.iter().zip(x.values()) {
            assert!((gv - 2.0 * xv).abs() < 1e-12);
        }
    }
}
