//! Dense-tensor reverse-mode differentiation engine.
//!
//! A [`Graph`] is a tape: forward ops append nodes that cache whatever the
//! backward pass needs, and [`Graph::backward`] walks the tape in reverse,
//! accumulating gradients. Tensors are plain row-major `f64` buffers behind
//! an `Arc`; a tensor with no node id is detached and never receives
//! gradients.
//!
//! The engine is deliberately small: the only shapes in play are 1-D/2-D
//! batches plus a 3-D batched matmul for per-sample mixing weights, and
//! broadcasting is restricted to "right-hand side is a suffix of the
//! left-hand shape" (bias adds over leading batch axes).

use std::sync::Arc;

use crate::{Error, Result};

pub mod adam;
pub mod gradcheck;
mod mat;

pub use adam::{clip_grad_norm, AdamState};

/// Handle into the active [`Graph`].
pub type NodeId = usize;

/// Stable index of a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Dense n-dimensional value array, optionally tracked by a graph.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    node: Option<NodeId>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data: Arc::new(data),
            node: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(vec![1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of length {}", self.data.len());
        self.data[0]
    }

    /// Same values, no graph membership. Idempotent.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    fn tracked(shape: Vec<usize>, data: Vec<f64>, node: Option<NodeId>) -> Self {
        Tensor {
            shape,
            data: Arc::new(data),
            node,
        }
    }
}

enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId, m: usize, k: usize, n: usize },
    /// Per-sample matmul: a is batch×m×k, b is batch×k×n.
    Bmm { a: NodeId, b: NodeId, batch: usize, m: usize, k: usize, n: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    SqDiff { a: NodeId, b: NodeId },
    Relu { x: NodeId },
    Elu { x: NodeId },
    Abs { x: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Scale { x: NodeId, c: f64 },
    MaxLast { x: NodeId, argmax: Vec<usize> },
    SelectLast { x: NodeId, idx: Vec<usize> },
    SliceLast { x: NodeId, start: usize, width: usize },
    SumLast { x: NodeId },
    SumAll { x: NodeId },
    MeanAll { x: NodeId },
    Reshape { x: NodeId },
    ConcatLast { xs: Vec<NodeId>, widths: Vec<usize> },
}

struct Node {
    op: Op,
    value: Arc<Vec<f64>>,
}

/// Gradients produced by [`Graph::backward`], keyed by node id.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_nodes: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    pub fn by_node(&self, node: NodeId) -> Option<&[f64]> {
        self.grads.get(node).and_then(|g| g.as_deref())
    }

    /// Gradient buffer for a parameter, if it was reachable from the loss.
    pub fn by_param(&self, id: ParamId) -> Option<&[f64]> {
        self.param_nodes
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, n)| self.by_node(*n))
    }

    /// Collects per-parameter gradient buffers aligned with a [`ParamSet`].
    pub fn into_param_grads(mut self, n_params: usize) -> Vec<Option<Vec<f64>>> {
        let mut out: Vec<Option<Vec<f64>>> = (0..n_params).map(|_| None).collect();
        for (pid, node) in std::mem::take(&mut self.param_nodes) {
            if let Some(g) = self.grads.get_mut(node).and_then(|g| g.take()) {
                out[pid.0] = Some(g);
            }
        }
        out
    }
}

/// One learnable tensor.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
}

/// Flat store of all learnable tensors of a model assembly.
///
/// Cloning a `ParamSet` is cheap (`Arc` per tensor) which is how target
/// networks and rollout snapshots are taken; the Adam update copies on
/// write.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, shape: Vec<usize>, data: Vec<f64>) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Param {
            value: Tensor::from_vec(shape, data),
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        Arc::make_mut(&mut self.params[id.0].value.data)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), &p.value))
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Reverse-mode tape. One graph per training step, single-threaded.
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: Vec<(ParamId, NodeId)>,
    recording: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            recording: true,
        }
    }

    /// A graph that computes values but records nothing; every result is
    /// detached. Used for target-network and rollout forwards.
    pub fn no_grad() -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Registers a parameter as a leaf, reusing the node on repeated use so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Tensor {
        let t = params.get(id);
        if !self.recording {
            return t.detach();
        }
        if let Some(&(_, node)) = self.param_nodes.iter().find(|(p, _)| *p == id) {
            return Tensor {
                shape: t.shape.clone(),
                data: Arc::clone(&self.nodes[node].value),
                node: Some(node),
            };
        }
        let node = self.push(Op::Leaf, Arc::clone(&t.data));
        self.param_nodes.push((id, node));
        Tensor {
            shape: t.shape.clone(),
            data: Arc::clone(&t.data),
            node: Some(node),
        }
    }

    fn push(&mut self, op: Op, value: Arc<Vec<f64>>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { op, value });
        id
    }

    /// Node id for an input tensor, registering detached inputs as
    /// anonymous leaves (gradient flow stops there).
    fn input(&mut self, t: &Tensor) -> NodeId {
        match t.node {
            Some(n) => n,
            None => self.push(Op::Leaf, Arc::clone(&t.data)),
        }
    }

    fn out(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        if self.recording {
            let value = Arc::new(data);
            let node = self.push(op, Arc::clone(&value));
            Tensor {
                shape,
                data: value,
                node: Some(node),
            }
        } else {
            Tensor::tracked(shape, data, None)
        }
    }

    // ── forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, k) = as_2d("matmul", a)?;
        let (k2, n) = as_2d("matmul", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut c = vec![0.0; m * n];
        mat::matmul(m, k, n, &a.data, &b.data, &mut c);
        let (an, bn) = if self.recording {
            (self.input(a), self.input(b))
        } else {
            (0, 0)
        };
        Ok(self.out(Op::Matmul { a: an, b: bn, m, k, n }, vec![m, n], c))
    }

    /// Batched matmul over the leading axis: (B,m,k) @ (B,k,n) → (B,m,n).
    pub fn bmm(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let mismatch = || Error::ShapeMismatch {
            op: "bmm",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        };
        if a.shape.len() != 3 || b.shape.len() != 3 || a.shape[0] != b.shape[0] || a.shape[2] != b.shape[1] {
            return Err(mismatch());
        }
        let (batch, m, k, n) = (a.shape[0], a.shape[1], a.shape[2], b.shape[2]);
        let mut c = vec![0.0; batch * m * n];
        for s in 0..batch {
            mat::matmul(
                m,
                k,
                n,
                &a.data[s * m * k..(s + 1) * m * k],
                &b.data[s * k * n..(s + 1) * k * n],
                &mut c[s * m * n..(s + 1) * m * n],
            );
        }
        let (an, bn) = if self.recording {
            (self.input(a), self.input(b))
        } else {
            (0, 0)
        };
        Ok(self.out(Op::Bmm { a: an, b: bn, batch, m, k, n }, vec![batch, m, n], c))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.broadcast_binary("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.broadcast_binary("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.broadcast_binary("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    /// Elementwise (a − b)², same shapes only.
    pub fn sq_diff(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch {
                op: "sq_diff",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let data: Vec<f64> = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .collect();
        let (an, bn) = if self.recording {
            (self.input(a), self.input(b))
        } else {
            (0, 0)
        };
        Ok(self.out(Op::SqDiff { a: an, b: bn }, a.shape.clone(), data))
    }

    pub fn relu(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, |v| v.max(0.0), |x| Op::Relu { x })
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, |v| if v > 0.0 { v } else { v.exp_m1() }, |x| Op::Elu { x })
    }

    /// |x|; the subgradient at 0 is 0.
    pub fn abs(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, f64::abs, |x| Op::Abs { x })
    }

    pub fn sigmoid(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), |x| Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, f64::tanh, |x| Op::Tanh { x })
    }

    pub fn scale(&mut self, x: &Tensor, c: f64) -> Tensor {
        let data: Vec<f64> = x.data.iter().map(|v| v * c).collect();
        let xn = if self.recording { self.input(x) } else { 0 };
        self.out(Op::Scale { x: xn, c }, x.shape.clone(), data)
    }

    /// Max over the last axis. Returns the reduced tensor (last dim 1) and
    /// the flat argmax indices; ties break to the lowest index.
    pub fn max_last(&mut self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (rows, d) = rows_last(x);
        if d == 0 {
            return Err(Error::ShapeMismatch {
                op: "max_last",
                lhs: x.shape.clone(),
                rhs: vec![],
            });
        }
        let mut vals = vec![0.0; rows];
        let mut argmax = vec![0usize; rows];
        for r in 0..rows {
            let row = &x.data[r * d..(r + 1) * d];
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            vals[r] = row[best];
            argmax[r] = best;
        }
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = 1;
        let xn = if self.recording { self.input(x) } else { 0 };
        let t = self.out(
            Op::MaxLast {
                x: xn,
                argmax: argmax.clone(),
            },
            shape,
            vals,
        );
        Ok((t, argmax))
    }

    /// Picks `idx[r]` from each row of the last axis → last dim 1.
    pub fn select_last(&mut self, x: &Tensor, idx: &[usize]) -> Result<Tensor> {
        let (rows, d) = rows_last(x);
        if idx.len() != rows || idx.iter().any(|&i| i >= d) {
            return Err(Error::ShapeMismatch {
                op: "select_last",
                lhs: x.shape.clone(),
                rhs: vec![idx.len()],
            });
        }
        let data: Vec<f64> = idx.iter().enumerate().map(|(r, &i)| x.data[r * d + i]).collect();
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = 1;
        let xn = if self.recording { self.input(x) } else { 0 };
        Ok(self.out(Op::SelectLast { x: xn, idx: idx.to_vec() }, shape, data))
    }

    /// Columns [start, start+width) of the last axis.
    pub fn slice_last(&mut self, x: &Tensor, start: usize, width: usize) -> Result<Tensor> {
        let (rows, d) = rows_last(x);
        if start + width > d {
            return Err(Error::ShapeMismatch {
                op: "slice_last",
                lhs: x.shape.clone(),
                rhs: vec![start, width],
            });
        }
        let mut data = vec![0.0; rows * width];
        for r in 0..rows {
            data[r * width..(r + 1) * width].copy_from_slice(&x.data[r * d + start..r * d + start + width]);
        }
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = width;
        let xn = if self.recording { self.input(x) } else { 0 };
        Ok(self.out(Op::SliceLast { x: xn, start, width }, shape, data))
    }

    pub fn sum_last(&mut self, x: &Tensor) -> Tensor {
        let (rows, d) = rows_last(x);
        let data: Vec<f64> = (0..rows).map(|r| x.data[r * d..(r + 1) * d].iter().sum()).collect();
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = 1;
        let xn = if self.recording { self.input(x) } else { 0 };
        self.out(Op::SumLast { x: xn }, shape, data)
    }

    pub fn sum_all(&mut self, x: &Tensor) -> Tensor {
        let s: f64 = x.data.iter().sum();
        let xn = if self.recording { self.input(x) } else { 0 };
        self.out(Op::SumAll { x: xn }, vec![1], vec![s])
    }

    pub fn mean_all(&mut self, x: &Tensor) -> Tensor {
        let s: f64 = x.data.iter().sum::<f64>() / x.data.len() as f64;
        let xn = if self.recording { self.input(x) } else { 0 };
        self.out(Op::MeanAll { x: xn }, vec![1], vec![s])
    }

    /// Same data, new shape (element count must match).
    pub fn reshape(&mut self, x: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != x.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: x.shape.clone(),
                rhs: shape,
            });
        }
        let xn = if self.recording { self.input(x) } else { 0 };
        Ok(self.out(Op::Reshape { x: xn }, shape, x.data.to_vec()))
    }

    /// Concatenates along the last axis; all leading dims must agree.
    pub fn concat_last(&mut self, xs: &[&Tensor]) -> Result<Tensor> {
        assert!(!xs.is_empty(), "concat_last of zero tensors");
        let lead = &xs[0].shape[..xs[0].shape.len() - 1];
        for x in xs {
            if &x.shape[..x.shape.len() - 1] != lead {
                return Err(Error::ShapeMismatch {
                    op: "concat_last",
                    lhs: xs[0].shape.clone(),
                    rhs: x.shape.clone(),
                });
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = xs.iter().map(|x| *x.shape.last().unwrap()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        for r in 0..rows {
            let mut off = 0;
            for (x, w) in xs.iter().zip(&widths) {
                data[r * total + off..r * total + off + w].copy_from_slice(&x.data[r * w..(r + 1) * w]);
                off += w;
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let nodes: Vec<NodeId> = if self.recording {
            xs.iter().map(|x| self.input(x)).collect()
        } else {
            Vec::new()
        };
        Ok(self.out(Op::ConcatLast { xs: nodes, widths }, shape, data))
    }

    fn unary(&mut self, x: &Tensor, f: impl Fn(f64) -> f64, op: impl FnOnce(NodeId) -> Op) -> Tensor {
        let data: Vec<f64> = x.data.iter().map(|v| f(*v)).collect();
        let xn = if self.recording { self.input(x) } else { 0 };
        self.out(op(xn), x.shape.clone(), data)
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(NodeId, NodeId) -> Op,
    ) -> Result<Tensor> {
        // b's shape must equal a's or be a suffix of it (broadcast over
        // leading batch axes).
        if !is_suffix(&b.shape, &a.shape) {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let bl = b.data.len();
        let data: Vec<f64> = a
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| f(*x, b.data[i % bl]))
            .collect();
        let (an, bn) = if self.recording {
            (self.input(a), self.input(b))
        } else {
            (0, 0)
        };
        Ok(self.out(op(an, bn), a.shape.clone(), data))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Every node appended before the loss
    /// is visited at most once; detached inputs are anonymous leaves, so
    /// nothing upstream of a detach receives gradients.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        let node = loss.node.ok_or(Error::DetachedLoss)?;
        if loss.data.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: loss.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=node).map(|_| None).collect();
        grads[node] = Some(vec![1.0]);

        for id in (0..=node).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            param_nodes: self.param_nodes.clone(),
        })
    }

    fn accumulate(&self, id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b, m, k, n } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                {
                    let ga = grads[*a].get_or_insert_with(|| vec![0.0; m * k]);
                    mat::matmul_nt_acc(*m, *n, *k, g, bv, ga);
                }
                let gb = grads[*b].get_or_insert_with(|| vec![0.0; k * n]);
                mat::matmul_tn_acc(*k, *m, *n, av, g, gb);
            }
            Op::Bmm { a, b, batch, m, k, n } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                {
                    let ga = grads[*a].get_or_insert_with(|| vec![0.0; batch * m * k]);
                    for s in 0..*batch {
                        mat::matmul_nt_acc(
                            *m,
                            *n,
                            *k,
                            &g[s * m * n..(s + 1) * m * n],
                            &bv[s * k * n..(s + 1) * k * n],
                            &mut ga[s * m * k..(s + 1) * m * k],
                        );
                    }
                }
                let gb = grads[*b].get_or_insert_with(|| vec![0.0; batch * k * n]);
                for s in 0..*batch {
                    mat::matmul_tn_acc(
                        *k,
                        *m,
                        *n,
                        &av[s * m * k..(s + 1) * m * k],
                        &g[s * m * n..(s + 1) * m * n],
                        &mut gb[s * k * n..(s + 1) * k * n],
                    );
                }
            }
            Op::Add { a, b } => {
                self.acc_same(grads, *a, g);
                self.acc_reduced(grads, *b, g);
            }
            Op::Sub { a, b } => {
                self.acc_same(grads, *a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                self.acc_reduced(grads, *b, &neg);
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let bl = bv.len();
                let ga_contrib: Vec<f64> = g.iter().enumerate().map(|(i, v)| v * bv[i % bl]).collect();
                self.acc_same(grads, *a, &ga_contrib);
                let gb_contrib: Vec<f64> = g.iter().enumerate().map(|(i, v)| v * av[i]).collect();
                self.acc_reduced(grads, *b, &gb_contrib);
            }
            Op::SqDiff { a, b } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let d: Vec<f64> = g
                    .iter()
                    .zip(av.iter().zip(bv.iter()))
                    .map(|(gv, (x, y))| 2.0 * gv * (x - y))
                    .collect();
                self.acc_same(grads, *a, &d);
                let nd: Vec<f64> = d.iter().map(|v| -v).collect();
                self.acc_same(grads, *b, &nd);
            }
            Op::Relu { x } => {
                let xv = &self.nodes[*x].value;
                let d: Vec<f64> = g.iter().zip(xv.iter()).map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 }).collect();
                self.acc_same(grads, *x, &d);
            }
            Op::Elu { x } => {
                // f'(x) = 1 for x > 0, else eˣ = f(x) + 1
                let (xv, out) = (&self.nodes[*x].value, &node.value);
                let d: Vec<f64> = g
                    .iter()
                    .zip(xv.iter().zip(out.iter()))
                    .map(|(gv, (v, f))| if *v > 0.0 { *gv } else { gv * (f + 1.0) })
                    .collect();
                self.acc_same(grads, *x, &d);
            }
            Op::Abs { x } => {
                let xv = &self.nodes[*x].value;
                let d: Vec<f64> = g
                    .iter()
                    .zip(xv.iter())
                    .map(|(gv, v)| {
                        if *v > 0.0 {
                            *gv
                        } else if *v < 0.0 {
                            -*gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.acc_same(grads, *x, &d);
            }
            Op::Sigmoid { x } => {
                let out = &node.value;
                let d: Vec<f64> = g.iter().zip(out.iter()).map(|(gv, s)| gv * s * (1.0 - s)).collect();
                self.acc_same(grads, *x, &d);
            }
            Op::Tanh { x } => {
                let out = &node.value;
                let d: Vec<f64> = g.iter().zip(out.iter()).map(|(gv, t)| gv * (1.0 - t * t)).collect();
                self.acc_same(grads, *x, &d);
            }
            Op::Scale { x, c } => {
                let d: Vec<f64> = g.iter().map(|v| v * c).collect();
                self.acc_same(grads, *x, &d);
            }
            Op::MaxLast { x, argmax } => {
                let d = self.nodes[*x].value.len() / argmax.len();
                let gx = grads[*x].get_or_insert_with(|| vec![0.0; argmax.len() * d]);
                for (r, &j) in argmax.iter().enumerate() {
                    gx[r * d + j] += g[r];
                }
            }
            Op::SelectLast { x, idx } => {
                let d = self.nodes[*x].value.len() / idx.len();
                let gx = grads[*x].get_or_insert_with(|| vec![0.0; idx.len() * d]);
                for (r, &j) in idx.iter().enumerate() {
                    gx[r * d + j] += g[r];
                }
            }
            Op::SliceLast { x, start, width } => {
                let xl = self.nodes[*x].value.len();
                let rows = g.len() / width;
                let d = xl / rows;
                let gx = grads[*x].get_or_insert_with(|| vec![0.0; xl]);
                for r in 0..rows {
                    for j in 0..*width {
                        gx[r * d + start + j] += g[r * width + j];
                    }
                }
            }
            Op::SumLast { x } => {
                let xl = self.nodes[*x].value.len();
                let d = xl / g.len();
                let gx = grads[*x].get_or_insert_with(|| vec![0.0; xl]);
                for r in 0..g.len() {
                    for j in 0..d {
                        gx[r * d + j] += g[r];
                    }
                }
            }
            Op::SumAll { x } => {
                let xl = self.nodes[*x].value.len();
                let gx = grads[*x].get_or_insert_with(|| vec![0.0; xl]);
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }
            Op::MeanAll { x } => {
                let xl = self.nodes[*x].value.len();
                let c = g[0] / xl as f64;
                let gx = grads[*x].get_or_insert_with(|| vec![0.0; xl]);
                for v in gx.iter_mut() {
                    *v += c;
                }
            }
            Op::Reshape { x } => {
                self.acc_same(grads, *x, g);
            }
            Op::ConcatLast { xs, widths } => {
                let total: usize = widths.iter().sum();
                let rows = g.len() / total;
                let mut off = 0;
                for (x, w) in xs.iter().zip(widths) {
                    let gx = grads[*x].get_or_insert_with(|| vec![0.0; rows * w]);
                    for r in 0..rows {
                        for j in 0..*w {
                            gx[r * w + j] += g[r * total + off + j];
                        }
                    }
                    off += w;
                }
            }
        }
    }

    fn acc_same(&self, grads: &mut [Option<Vec<f64>>], n: NodeId, contrib: &[f64]) {
        let g = grads[n].get_or_insert_with(|| vec![0.0; contrib.len()]);
        for (gv, c) in g.iter_mut().zip(contrib) {
            *gv += c;
        }
    }

    /// Accumulate into `n`, summing over leading broadcast axes when the
    /// target buffer is shorter than the contribution.
    fn acc_reduced(&self, grads: &mut [Option<Vec<f64>>], n: NodeId, contrib: &[f64]) {
        let len = self.nodes[n].value.len();
        let g = grads[n].get_or_insert_with(|| vec![0.0; len]);
        if len == contrib.len() {
            for (gv, c) in g.iter_mut().zip(contrib) {
                *gv += c;
            }
        } else {
            for (i, c) in contrib.iter().enumerate() {
                g[i % len] += c;
            }
        }
    }
}

fn as_2d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.shape.len() == 2 {
        Ok((t.shape[0], t.shape[1]))
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: t.shape.clone(),
            rhs: vec![],
        })
    }
}

fn rows_last(t: &Tensor) -> (usize, usize) {
    let d = *t.shape.last().unwrap_or(&1);
    (t.data.len() / d.max(1), d)
}

fn is_suffix(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len() && &big[big.len() - small.len()..] == small
}
