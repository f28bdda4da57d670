//! Eager tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records one step's computation as a flat arena of nodes; ops
//! evaluate immediately and [`Graph::backward`] walks the arena in reverse.
//! Parameters live in a [`ParamSet`] owned by the model; leaves reference
//! their values through shared storage, and gradients flow back into the set
//! via [`Graph::accumulate_grads_into`] in node-index order, which pins the
//! accumulation order and keeps training bitwise reproducible.
//!
//! The op set is exactly what the networks need: 1-D convolution (stride 1,
//! "same" zero padding), ReLU/PReLU, elementwise arithmetic, exp/log/clamp,
//! a constant matrix product for feature transforms, and fused MSE/KL
//! reductions. Convolution kernels carry the training cost, so their inner
//! loops run over the contiguous channel axis with explicit fused
//! multiply-adds.

use alloc::string::String;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    BadArg { op: &'static str, msg: String },
    NonScalarLoss { shape: Vec<usize> },
    DuplicateParam(String),
    UnknownParam(String),
}

impl core::fmt::Display for GraphError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GraphError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            GraphError::BadArg { op, msg } => write!(f, "{op}: {msg}"),
            GraphError::NonScalarLoss { shape } => {
                write!(f, "backward needs a scalar loss, got shape {shape:?}")
            }
            GraphError::DuplicateParam(name) => write!(f, "duplicate parameter name '{name}'"),
            GraphError::UnknownParam(name) => write!(f, "unknown parameter '{name}'"),
        }
    }
}

/// Handle to a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    /// Position in registration order; stable for a given model layout.
    pub fn index(&self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its gradient slot.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// All parameters of one model, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId, GraphError> {
        if self.entries.iter().any(|p| p.name == name) {
            return Err(GraphError::DuplicateParam(name.to_string()));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Parameter { name: name.to_string(), value, grad });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Total number of scalar elements across all parameters.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn any_non_finite_grad(&self) -> bool {
        self.entries.iter().any(|p| p.grad.has_non_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    PRelu { x: NodeId, alpha: NodeId },
    Exp(NodeId),
    LnEps { x: NodeId, eps: f64 },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Conv1d { x: NodeId, w: NodeId, b: NodeId },
    MatMulConst { x: NodeId, m: Tensor },
    Mse(NodeId, NodeId),
    Kl { mu: NodeId, logvar: NodeId },
    Sum(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// One step's computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = crate::mathfn::fma(*s, a, *d);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc = crate::mathfn::fma(*x, *y, acc);
    }
    acc
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass w.r.t. this node, if it was reached.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value, false)
    }

    /// Leaf referencing a parameter's current value (no copy; shared storage).
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        let value = params.value(id).clone();
        self.push(Op::Param(id), value, true)
    }

    fn same_shape(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), GraphError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(GraphError::ShapeMismatch {
                op,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("add", a, b)?;
        let out = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data().iter())
                .map(|(x, y)| x + y)
                .collect(),
        )
        .expect("add: same shape");
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), out, ng))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.value(x).map(|v| c * v);
        let ng = self.needs(x);
        self.push(Op::Scale(x, c), out, ng)
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.value(x).map(|v| v + c);
        let ng = self.needs(x);
        self.push(Op::AddConst(x), out, ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("mul", a, b)?;
        let out = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data().iter())
                .map(|(x, y)| x * y)
                .collect(),
        )
        .expect("mul: same shape");
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), out, ng))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let ng = self.needs(x);
        self.push(Op::Relu(x), out, ng)
    }

    /// PReLU with a single learnable slope (shape [1]).
    pub fn prelu(&mut self, x: NodeId, alpha: NodeId) -> Result<NodeId, GraphError> {
        if self.value(alpha).len() != 1 {
            return Err(GraphError::BadArg {
                op: "prelu",
                msg: alloc::format!("alpha must be a single scalar, got shape {:?}", self.value(alpha).shape()),
            });
        }
        let a = self.value(alpha).data()[0];
        let out = self.value(x).map(|v| if v > 0.0 { v } else { a * v });
        let ng = self.needs(x) || self.needs(alpha);
        Ok(self.push(Op::PRelu { x, alpha }, out, ng))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(libm::exp);
        let ng = self.needs(x);
        self.push(Op::Exp(x), out, ng)
    }

    pub fn ln_eps(&mut self, x: NodeId, eps: f64) -> NodeId {
        let out = self.value(x).map(|v| libm::log(v + eps));
        let ng = self.needs(x);
        self.push(Op::LnEps { x, eps }, out, ng)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        let ng = self.needs(x);
        self.push(Op::Clamp { x, lo, hi }, out, ng)
    }

    /// 1-D convolution over time. `x` is T x C_in (time-major), `w` is
    /// K x C_in x C_out with K odd, `b` is C_out. Stride 1, "same" zero
    /// padding: the output is T x C_out.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 2 || ws.len() != 3 || bs.len() != 1 {
            return Err(GraphError::ShapeMismatch { op: "conv1d", lhs: xs, rhs: ws });
        }
        let (t_len, c_in) = (xs[0], xs[1]);
        let (k, w_cin, c_out) = (ws[0], ws[1], ws[2]);
        if w_cin != c_in || bs[0] != c_out {
            return Err(GraphError::ShapeMismatch { op: "conv1d", lhs: xs, rhs: ws });
        }
        if k % 2 == 0 {
            return Err(GraphError::BadArg {
                op: "conv1d",
                msg: alloc::format!("kernel size must be odd, got {k}"),
            });
        }
        let pad = (k - 1) / 2;
        let mut out = vec![0.0; t_len * c_out];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(b).data();
            for row in out.chunks_mut(c_out) {
                row.copy_from_slice(bv);
            }
            for kk in 0..k {
                let off = kk as isize - pad as isize;
                let t0 = if off < 0 { (-off) as usize } else { 0 };
                let t1 = if off > 0 { t_len - off as usize } else { t_len };
                for ci in 0..c_in {
                    let wrow = &wv[(kk * c_in + ci) * c_out..(kk * c_in + ci + 1) * c_out];
                    for t in t0..t1 {
                        let src = (t as isize + off) as usize;
                        let xval = xv[src * c_in + ci];
                        if xval != 0.0 {
                            axpy(&mut out[t * c_out..(t + 1) * c_out], xval, wrow);
                        }
                    }
                }
            }
        }
        let value = Tensor::from_vec(&[t_len, c_out], out).expect("conv1d output shape");
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Conv1d { x, w, b }, value, ng))
    }

    /// Multiply each frame (row) of `x` (T x D) by a constant matrix
    /// `m` (R x D), giving T x R.
    pub fn matmul_const(&mut self, m: Tensor, x: NodeId) -> Result<NodeId, GraphError> {
        let xs = self.value(x).shape().to_vec();
        let ms = m.shape().to_vec();
        if xs.len() != 2 || ms.len() != 2 || ms[1] != xs[1] {
            return Err(GraphError::ShapeMismatch { op: "matmul_const", lhs: ms, rhs: xs });
        }
        let (t_len, d) = (xs[0], xs[1]);
        let r = ms[0];
        let mut out = vec![0.0; t_len * r];
        {
            let xv = self.value(x).data();
            let mv = m.data();
            for t in 0..t_len {
                let xrow = &xv[t * d..(t + 1) * d];
                let orow = &mut out[t * r..(t + 1) * r];
                for (j, o) in orow.iter_mut().enumerate() {
                    *o = dot(&mv[j * d..(j + 1) * d], xrow);
                }
            }
        }
        let value = Tensor::from_vec(&[t_len, r], out).expect("matmul shape");
        let ng = self.needs(x);
        Ok(self.push(Op::MatMulConst { x, m }, value, ng))
    }

    /// Mean squared error over all elements (scalar output).
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("mse", a, b)?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let n = av.len() as f64;
        let mut acc = 0.0;
        for (x, y) in av.iter().zip(bv.iter()) {
            let d = x - y;
            acc = crate::mathfn::fma(d, d, acc);
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mse(a, b), Tensor::scalar(acc / n), ng))
    }

    /// Gaussian KL to the standard normal: mean over frames (rows) of
    /// -0.5 * sum_d (1 + logvar - mu^2 - exp(logvar)); scalar output.
    pub fn kl(&mut self, mu: NodeId, logvar: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("kl", mu, logvar)?;
        let shape = self.value(mu).shape().to_vec();
        if shape.len() != 2 {
            return Err(GraphError::BadArg {
                op: "kl",
                msg: alloc::format!("expected T x D latents, got shape {shape:?}"),
            });
        }
        let t_len = shape[0] as f64;
        let mut acc = 0.0;
        for (m, lv) in self.value(mu).data().iter().zip(self.value(logvar).data().iter()) {
            acc += -0.5 * (1.0 + lv - m * m - libm::exp(*lv));
        }
        let ng = self.needs(mu) || self.needs(logvar);
        Ok(self.push(Op::Kl { mu, logvar }, Tensor::scalar(acc / t_len), ng))
    }

    /// Sum of all elements (scalar output).
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let acc: f64 = self.value(x).data().iter().sum();
        let ng = self.needs(x);
        self.push(Op::Sum(x), Tensor::scalar(acc), ng)
    }

    fn grad_buf(&mut self, id: NodeId) -> &mut Tensor {
        if self.grads[id.0].is_none() {
            self.grads[id.0] = Some(Tensor::zeros(self.nodes[id.0].value.shape()));
        }
        self.grads[id.0].as_mut().unwrap()
    }

    /// Reverse pass from a scalar loss. Node gradients are recomputed from
    /// scratch on each call; parameter gradients accumulate only when
    /// [`Graph::accumulate_grads_into`] is applied.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GraphError> {
        if !self.value(loss).is_scalar() {
            return Err(GraphError::NonScalarLoss {
                shape: self.value(loss).shape().to_vec(),
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            if self.grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Const | Op::Param(_) => {}
                Op::Add(a, b) => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(a) {
                        axpy(self.grad_buf(a).data_mut(), 1.0, g.data());
                    }
                    if self.needs(b) {
                        axpy(self.grad_buf(b).data_mut(), 1.0, g.data());
                    }
                    self.grads[i] = Some(g);
                }
                Op::Scale(x, c) => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        axpy(self.grad_buf(x).data_mut(), c, g.data());
                    }
                    self.grads[i] = Some(g);
                }
                Op::AddConst(x) => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        axpy(self.grad_buf(x).data_mut(), 1.0, g.data());
                    }
                    self.grads[i] = Some(g);
                }
                Op::Mul(a, b) => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(a) {
                        let bv = self.nodes[b.0].value.clone();
                        let ga = self.grad_buf(a).data_mut();
                        for ((d, s), f) in ga.iter_mut().zip(g.data()).zip(bv.data()) {
                            *d = crate::mathfn::fma(*s, *f, *d);
                        }
                    }
                    if self.needs(b) {
                        let av = self.nodes[a.0].value.clone();
                        let gb = self.grad_buf(b).data_mut();
                        for ((d, s), f) in gb.iter_mut().zip(g.data()).zip(av.data()) {
                            *d = crate::mathfn::fma(*s, *f, *d);
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::Relu(x) => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        let xv = self.nodes[x.0].value.clone();
                        let gx = self.grad_buf(x).data_mut();
                        // Subgradient 0 at exactly zero.
                        for ((d, s), v) in gx.iter_mut().zip(g.data()).zip(xv.data()) {
                            if *v > 0.0 {
                                *d += s;
                            }
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::PRelu { x, alpha } => {
                    let g = self.grads[i].take().unwrap();
                    let a = self.nodes[alpha.0].value.data()[0];
                    let xv = self.nodes[x.0].value.clone();
                    if self.needs(x) {
                        let gx = self.grad_buf(x).data_mut();
                        // Slope alpha at exactly zero.
                        for ((d, s), v) in gx.iter_mut().zip(g.data()).zip(xv.data()) {
                            *d += if *v > 0.0 { *s } else { a * s };
                        }
                    }
                    if self.needs(alpha) {
                        let mut acc = 0.0;
                        for (s, v) in g.data().iter().zip(xv.data()) {
                            if *v <= 0.0 {
                                acc = crate::mathfn::fma(*s, *v, acc);
                            }
                        }
                        self.grad_buf(alpha).data_mut()[0] += acc;
                    }
                    self.grads[i] = Some(g);
                }
                Op::Exp(x) => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        let yv = self.nodes[i].value.clone();
                        let gx = self.grad_buf(x).data_mut();
                        for ((d, s), y) in gx.iter_mut().zip(g.data()).zip(yv.data()) {
                            *d = crate::mathfn::fma(*s, *y, *d);
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::LnEps { x, eps } => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        let xv = self.nodes[x.0].value.clone();
                        let gx = self.grad_buf(x).data_mut();
                        for ((d, s), v) in gx.iter_mut().zip(g.data()).zip(xv.data()) {
                            *d += s / (v + eps);
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::Clamp { x, lo, hi } => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        let xv = self.nodes[x.0].value.clone();
                        let gx = self.grad_buf(x).data_mut();
                        // Zero gradient on and beyond the boundaries.
                        for ((d, s), v) in gx.iter_mut().zip(g.data()).zip(xv.data()) {
                            if *v > lo && *v < hi {
                                *d += s;
                            }
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::Conv1d { x, w, b } => {
                    let g = self.grads[i].take().unwrap();
                    self.conv1d_backward(x, w, b, &g);
                    self.grads[i] = Some(g);
                }
                Op::MatMulConst { x, ref m } => {
                    let g = self.grads[i].take().unwrap();
                    if self.needs(x) {
                        let m = m.clone();
                        let (r, d) = m.dims2();
                        let t_len = self.nodes[x.0].value.shape()[0];
                        let gx = self.grad_buf(x).data_mut();
                        let gv = g.data();
                        let mv = m.data();
                        for t in 0..t_len {
                            let grow = &gv[t * r..(t + 1) * r];
                            let xrow = &mut gx[t * d..(t + 1) * d];
                            for (j, gj) in grow.iter().enumerate() {
                                if *gj != 0.0 {
                                    axpy(xrow, *gj, &mv[j * d..(j + 1) * d]);
                                }
                            }
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::Mse(a, b) => {
                    let g = self.grads[i].take().unwrap();
                    let go = g.item();
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let n = av.len() as f64;
                    let c = 2.0 * go / n;
                    if self.needs(a) {
                        let ga = self.grad_buf(a).data_mut();
                        for ((d, x), y) in ga.iter_mut().zip(av.data()).zip(bv.data()) {
                            *d = crate::mathfn::fma(x - y, c, *d);
                        }
                    }
                    if self.needs(b) {
                        let gb = self.grad_buf(b).data_mut();
                        for ((d, x), y) in gb.iter_mut().zip(av.data()).zip(bv.data()) {
                            *d = crate::mathfn::fma(x - y, -c, *d);
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::Kl { mu, logvar } => {
                    let g = self.grads[i].take().unwrap();
                    let go = g.item();
                    let t_len = self.nodes[mu.0].value.shape()[0] as f64;
                    let c = go / t_len;
                    if self.needs(mu) {
                        let mv = self.nodes[mu.0].value.clone();
                        let gm = self.grad_buf(mu).data_mut();
                        for (d, m) in gm.iter_mut().zip(mv.data()) {
                            *d = crate::mathfn::fma(*m, c, *d);
                        }
                    }
                    if self.needs(logvar) {
                        let lv = self.nodes[logvar.0].value.clone();
                        let gl = self.grad_buf(logvar).data_mut();
                        for (d, l) in gl.iter_mut().zip(lv.data()) {
                            *d += 0.5 * c * (libm::exp(*l) - 1.0);
                        }
                    }
                    self.grads[i] = Some(g);
                }
                Op::Sum(x) => {
                    let g = self.grads[i].take().unwrap();
                    let go = g.item();
                    if self.needs(x) {
                        for d in self.grad_buf(x).data_mut() {
                            *d += go;
                        }
                    }
                    self.grads[i] = Some(g);
                }
            }
        }
        Ok(())
    }

    fn conv1d_backward(&mut self, x: NodeId, w: NodeId, b: NodeId, g: &Tensor) {
        let ws = self.nodes[w.0].value.shape().to_vec();
        let (k, c_in, c_out) = (ws[0], ws[1], ws[2]);
        let t_len = self.nodes[x.0].value.shape()[0];
        let pad = (k - 1) / 2;
        let gv = g.data();

        if self.needs(b) {
            let gb = self.grad_buf(b).data_mut();
            for t in 0..t_len {
                axpy(gb, 1.0, &gv[t * c_out..(t + 1) * c_out]);
            }
        }
        if self.needs(w) {
            let xv = self.nodes[x.0].value.clone();
            let gw = self.grad_buf(w).data_mut();
            let xd = xv.data();
            for kk in 0..k {
                let off = kk as isize - pad as isize;
                let t0 = if off < 0 { (-off) as usize } else { 0 };
                let t1 = if off > 0 { t_len - off as usize } else { t_len };
                for ci in 0..c_in {
                    let wrow = &mut gw[(kk * c_in + ci) * c_out..(kk * c_in + ci + 1) * c_out];
                    for t in t0..t1 {
                        let src = (t as isize + off) as usize;
                        let xval = xd[src * c_in + ci];
                        if xval != 0.0 {
                            axpy(wrow, xval, &gv[t * c_out..(t + 1) * c_out]);
                        }
                    }
                }
            }
        }
        if self.needs(x) {
            let wv = self.nodes[w.0].value.clone();
            let gx = self.grad_buf(x).data_mut();
            let wd = wv.data();
            for kk in 0..k {
                let off = kk as isize - pad as isize;
                let t0 = if off < 0 { (-off) as usize } else { 0 };
                let t1 = if off > 0 { t_len - off as usize } else { t_len };
                for ci in 0..c_in {
                    let wrow = &wd[(kk * c_in + ci) * c_out..(kk * c_in + ci + 1) * c_out];
                    for t in t0..t1 {
                        let src = (t as isize + off) as usize;
                        gx[src * c_in + ci] += dot(wrow, &gv[t * c_out..(t + 1) * c_out]);
                    }
                }
            }
        }
    }

    /// Distance of the closest ReLU/PReLU input to its kink at zero (and of
    /// clamp inputs to their boundaries). Finite-difference checks reject
    /// sample points where this is below the step size.
    pub fn min_kink_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) | Op::PRelu { x, .. } => {
                    for v in self.nodes[x.0].value.data() {
                        min = min.min(v.abs());
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    for v in self.nodes[x.0].value.data() {
                        min = min.min((v - lo).abs()).min((v - hi).abs());
                    }
                }
                _ => {}
            }
        }
        min
    }

    /// Add this graph's parameter gradients (scaled) into the set, visiting
    /// leaves in node-index order. Calling it twice doubles the result;
    /// callers zero the set when starting a fresh step.
    pub fn accumulate_grads_into(&self, params: &mut ParamSet, scale: f64) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                if let Some(g) = &self.grads[i] {
                    let dst = params.entries[pid.0].grad.data_mut();
                    axpy(dst, scale, g.data());
                }
            }
        }
    }
}
