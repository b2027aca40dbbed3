use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};
use crate::math;

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Silu(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Sum(NodeId),
    Cols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    GatherRows {
        x: NodeId,
        idx: Vec<usize>,
    },
    OuterAdd(NodeId, NodeId),
    Reshape(NodeId),
    Custom {
        x: NodeId,
        local_grad: Vec<f64>,
    },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

/// Records operations on [`Var`]s in evaluation order and runs reverse-mode
/// differentiation over them.
///
/// Node ids are assigned in recording order, which is therefore a valid
/// topological order; [`Graph::backward`] walks it in reverse and visits each
/// node once.
#[derive(Default)]
pub struct Graph {
    inner: RefCell<Inner>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.value().shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        self.push_arc(Arc::new(value), op, needs_grad)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        inner.grads.push(None);
        Var { graph: self, id }
    }

    /// A leaf node. It receives a gradient iff `t.requires_grad()`.
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    pub fn leaf_shared(&self, t: Arc<Tensor>, requires_grad: bool) -> Var<'_> {
        self.push_arc(t, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    /// Registers an externally differentiated scalar function of `x`:
    /// the node's value is `value` and `d value / d x = local_grad`.
    pub fn custom_scalar<'g>(
        &'g self,
        x: Var<'g>,
        value: f64,
        local_grad: Vec<f64>,
    ) -> Result<Var<'g>> {
        let n = x.value().numel();
        if local_grad.len() != n {
            return Err(Error::Shape {
                op: "custom_scalar",
                left: vec![n],
                right: vec![local_grad.len()],
            });
        }
        let ng = self.needs(x.id);
        Ok(self.push(
            Tensor::scalar(value),
            Op::Custom {
                x: x.id,
                local_grad,
            },
            ng,
        ))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.inner.borrow().nodes[id].needs_grad
    }

    fn value_of(&self, id: NodeId) -> Arc<Tensor> {
        self.inner.borrow().nodes[id].value.clone()
    }

    /// Gradient of the last backward root with respect to `v`, if `v`
    /// participates in a path from a gradient-requiring leaf.
    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        let inner = self.inner.borrow();
        let g = inner.grads[v.id].as_ref()?;
        Tensor::new(inner.nodes[v.id].value.shape(), g.clone()).ok()
    }

    /// Clears all gradients so that `backward` may run again.
    pub fn reset_grads(&self) {
        let mut inner = self.inner.borrow_mut();
        for g in inner.grads.iter_mut() {
            *g = None;
        }
        inner.backward_done = false;
    }

    /// Reverse-mode sweep from a scalar `root`.
    ///
    /// Gradients accumulate additively across fan-out. Running backward a
    /// second time without [`Graph::reset_grads`] is an error.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if inner.backward_done {
            return Err(contract("backward called twice without reset_grads"));
        }
        if inner.nodes[root.id].value.numel() != 1 {
            return Err(contract("backward root must be a scalar"));
        }
        inner.backward_done = true;
        let Inner { nodes, grads, .. } = &mut *inner;
        grads[root.id] = Some(vec![1.0]);
        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.needs_grad {
                propagate(nodes, grads, node, &g);
            }
            grads[id] = Some(g);
        }
        Ok(())
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId, g: &[f64]) {
    if !nodes[id].needs_grad {
        return;
    }
    let buf = acc(grads, id, g.len());
    for (b, x) in buf.iter_mut().zip(g) {
        *b += x;
    }
}

fn add_scalar_or_full(
    grads: &mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: NodeId,
    g: &[f64],
    sign: f64,
) {
    if !nodes[id].needs_grad {
        return;
    }
    let n = nodes[id].value.numel();
    if n == g.len() {
        let buf = acc(grads, id, n);
        for (b, x) in buf.iter_mut().zip(g) {
            *b += sign * x;
        }
    } else {
        let s: f64 = g.iter().sum();
        acc(grads, id, 1)[0] += sign * s;
    }
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = av.dims2().unwrap();
            let n = bv.dims2().unwrap().1;
            if nodes[*a].needs_grad {
                let buf = acc(grads, *a, m * k);
                kernels::matmul_nt(g, bv.data(), buf, m, n, k);
            }
            if nodes[*b].needs_grad {
                let buf = acc(grads, *b, k * n);
                kernels::matmul_tn(av.data(), g, buf, m, k, n);
            }
        }
        Op::MatMulNt(a, b) => {
            // out[m×n] = a[m×k] · b[n×k]ᵀ
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = av.dims2().unwrap();
            let n = bv.dims2().unwrap().0;
            if nodes[*a].needs_grad {
                let buf = acc(grads, *a, m * k);
                kernels::matmul(g, bv.data(), buf, m, n, k);
            }
            if nodes[*b].needs_grad {
                let buf = acc(grads, *b, n * k);
                kernels::matmul_tn(g, av.data(), buf, m, n, k);
            }
        }
        Op::Add(a, b) => {
            add_scalar_or_full(grads, nodes, *a, g, 1.0);
            add_scalar_or_full(grads, nodes, *b, g, 1.0);
        }
        Op::Sub(a, b) => {
            add_scalar_or_full(grads, nodes, *a, g, 1.0);
            add_scalar_or_full(grads, nodes, *b, g, -1.0);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (nodes[*a].value.clone(), nodes[*b].value.clone());
            for (this, other) in [(*a, &bv), (*b, &av)] {
                if !nodes[this].needs_grad {
                    continue;
                }
                let this_n = nodes[this].value.numel();
                let od = other.data();
                if this_n == g.len() {
                    let buf = acc(grads, this, this_n);
                    if od.len() == 1 {
                        for (bx, gx) in buf.iter_mut().zip(g) {
                            *bx += gx * od[0];
                        }
                    } else {
                        for ((bx, gx), ox) in buf.iter_mut().zip(g).zip(od) {
                            *bx += gx * ox;
                        }
                    }
                } else {
                    let s: f64 = g.iter().zip(od).map(|(x, y)| x * y).sum();
                    acc(grads, this, 1)[0] += s;
                }
            }
        }
        Op::AddBias(x, b) => {
            add_into(grads, nodes, *x, g);
            if nodes[*b].needs_grad {
                let n = nodes[*b].value.numel();
                let buf = acc(grads, *b, n);
                for row in g.chunks(n) {
                    for (bx, gx) in buf.iter_mut().zip(row) {
                        *bx += gx;
                    }
                }
            }
        }
        Op::Scale(x, c) => {
            if nodes[*x].needs_grad {
                let buf = acc(grads, *x, g.len());
                for (bx, gx) in buf.iter_mut().zip(g) {
                    *bx += c * gx;
                }
            }
        }
        Op::Tanh(x) => {
            if nodes[*x].needs_grad {
                let buf = acc(grads, *x, g.len());
                for ((bx, gx), y) in buf.iter_mut().zip(g).zip(out.data()) {
                    *bx += gx * (1.0 - y * y);
                }
            }
        }
        Op::Sigmoid(x) => {
            if nodes[*x].needs_grad {
                let buf = acc(grads, *x, g.len());
                for ((bx, gx), y) in buf.iter_mut().zip(g).zip(out.data()) {
                    *bx += gx * y * (1.0 - y);
                }
            }
        }
        Op::Silu(x) => {
            if nodes[*x].needs_grad {
                let xv = nodes[*x].value.clone();
                let buf = acc(grads, *x, g.len());
                for ((bx, gx), &xi) in buf.iter_mut().zip(g).zip(xv.data()) {
                    let s = math::sigmoid(xi);
                    *bx += gx * s * (1.0 + xi * (1.0 - s));
                }
            }
        }
        Op::Softmax(x) => {
            if nodes[*x].needs_grad {
                let v = *out.shape().last().unwrap();
                let buf = acc(grads, *x, g.len());
                for ((brow, grow), yrow) in buf
                    .chunks_mut(v)
                    .zip(g.chunks(v))
                    .zip(out.data().chunks(v))
                {
                    let s = kernels::dot(grow, yrow);
                    for ((bx, gx), y) in brow.iter_mut().zip(grow).zip(yrow) {
                        *bx += y * (gx - s);
                    }
                }
            }
        }
        Op::LogSoftmax(x) => {
            if nodes[*x].needs_grad {
                let v = *out.shape().last().unwrap();
                let buf = acc(grads, *x, g.len());
                for ((brow, grow), yrow) in buf
                    .chunks_mut(v)
                    .zip(g.chunks(v))
                    .zip(out.data().chunks(v))
                {
                    let s: f64 = grow.iter().sum();
                    for ((bx, gx), y) in brow.iter_mut().zip(grow).zip(yrow) {
                        *bx += gx - math::exp(*y) * s;
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let d = nodes[*gain].value.numel();
            let gv = nodes[*gain].value.clone();
            if nodes[*gain].needs_grad {
                let buf = acc(grads, *gain, d);
                for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                    for ((bx, gx), h) in buf.iter_mut().zip(grow).zip(hrow) {
                        *bx += gx * h;
                    }
                }
            }
            if nodes[*bias].needs_grad {
                let buf = acc(grads, *bias, d);
                for grow in g.chunks(d) {
                    for (bx, gx) in buf.iter_mut().zip(grow) {
                        *bx += gx;
                    }
                }
            }
            if nodes[*x].needs_grad {
                let buf = acc(grads, *x, g.len());
                let nd = d as f64;
                let mut dxhat = vec![0.0; d];
                for (r, ((brow, grow), hrow)) in buf
                    .chunks_mut(d)
                    .zip(g.chunks(d))
                    .zip(xhat.chunks(d))
                    .enumerate()
                {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..d {
                        dxhat[j] = grow[j] * gv.data()[j];
                        s1 += dxhat[j];
                        s2 += dxhat[j] * hrow[j];
                    }
                    let is = inv_std[r];
                    for j in 0..d {
                        brow[j] += is * (dxhat[j] - s1 / nd - hrow[j] * s2 / nd);
                    }
                }
            }
        }
        Op::Sum(x) => {
            if nodes[*x].needs_grad {
                let n = nodes[*x].value.numel();
                let buf = acc(grads, *x, n);
                for bx in buf.iter_mut() {
                    *bx += g[0];
                }
            }
        }
        Op::Cols { x, start } => {
            if nodes[*x].needs_grad {
                let (r, c) = nodes[*x].value.dims2().unwrap();
                let w = out.dims2().unwrap().1;
                let buf = acc(grads, *x, r * c);
                for i in 0..r {
                    for j in 0..w {
                        buf[i * c + start + j] += g[i * w + j];
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = out.dims2().unwrap().1;
            let mut off = 0;
            for &p in parts {
                let (r, w) = nodes[p].value.dims2().unwrap();
                if nodes[p].needs_grad {
                    let buf = acc(grads, p, r * w);
                    for i in 0..r {
                        for j in 0..w {
                            buf[i * w + j] += g[i * total + off + j];
                        }
                    }
                }
                off += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let n = nodes[p].value.numel();
                add_into(grads, nodes, p, &g[off..off + n]);
                off += n;
            }
        }
        Op::GatherRows { x, idx } => {
            if nodes[*x].needs_grad {
                let (r, c) = nodes[*x].value.dims2().unwrap();
                let buf = acc(grads, *x, r * c);
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        buf[i * c + j] += g[k * c + j];
                    }
                }
            }
        }
        Op::OuterAdd(a, b) => {
            let (ta, j) = nodes[*a].value.dims2().unwrap();
            let ub = nodes[*b].value.dims2().unwrap().0;
            if nodes[*a].needs_grad {
                let buf = acc(grads, *a, ta * j);
                for t in 0..ta {
                    for u in 0..ub {
                        let row = &g[(t * ub + u) * j..(t * ub + u + 1) * j];
                        for (bx, gx) in buf[t * j..(t + 1) * j].iter_mut().zip(row) {
                            *bx += gx;
                        }
                    }
                }
            }
            if nodes[*b].needs_grad {
                let buf = acc(grads, *b, ub * j);
                for t in 0..ta {
                    for u in 0..ub {
                        let row = &g[(t * ub + u) * j..(t * ub + u + 1) * j];
                        for (bx, gx) in buf[u * j..(u + 1) * j].iter_mut().zip(row) {
                            *bx += gx;
                        }
                    }
                }
            }
        }
        Op::Reshape(x) => add_into(grads, nodes, *x, g),
        Op::Custom { x, local_grad } => {
            if nodes[*x].needs_grad {
                let buf = acc(grads, *x, local_grad.len());
                for (bx, lg) in buf.iter_mut().zip(local_grad) {
                    *bx += g[0] * lg;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Forward computations shared with the eager backend.

pub(crate) mod fwd {
    use super::*;

    fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
        Error::Shape {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        }
    }

    pub fn binary(
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape(), data)
        } else if b.numel() == 1 {
            let y = b.data()[0];
            Ok(a.map(|x| f(x, y)))
        } else if a.numel() == 1 {
            let x = a.data()[0];
            Ok(b.map(|y| f(x, y)))
        } else {
            Err(shape_err(op, a, b))
        }
    }

    pub fn add_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (_, c) = x.dims2()?;
        if b.numel() != c || b.shape().len() != 1 {
            return Err(shape_err("add_bias", x, b));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(out)
    }

    pub fn layer_norm(x: &Tensor, g: &Tensor, b: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let (r, d) = x.dims2()?;
        if g.numel() != d || b.numel() != d {
            return Err(shape_err("layer_norm", x, g));
        }
        let mut out = vec![0.0; r * d];
        let mut xhat = vec![0.0; r * d];
        let mut inv = vec![0.0; r];
        for i in 0..r {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / math::sqrt(var + LN_EPS);
            inv[i] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[i * d + j] = h;
                out[i * d + j] = h * g.data()[j] + b.data()[j];
            }
        }
        Ok((Tensor::new(x.shape(), out)?, xhat, inv))
    }

    pub fn cols(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = x.dims2()?;
        if start + len > c || x.shape().len() != 2 {
            return Err(Error::Shape {
                op: "cols",
                left: x.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&x.row(i)[start..start + len]);
        }
        Tensor::new(&[r, len], out)
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::EmptyInput("concat_cols"))?;
        let r = first.dims2()?.0;
        let mut total = 0;
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pr != r || p.shape().len() != 2 {
                return Err(shape_err("concat_cols", first, p));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Tensor::new(&[r, total], out)
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::EmptyInput("concat_rows"))?;
        let c = first.dims2()?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pc != c || p.shape().len() != 2 {
                return Err(shape_err("concat_rows", first, p));
            }
            rows += pr;
            out.extend_from_slice(p.data());
        }
        Tensor::new(&[rows, c], out)
    }

    pub fn gather_rows(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
        let (r, c) = x.dims2()?;
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(Error::Shape {
                    op: "gather_rows",
                    left: x.shape().to_vec(),
                    right: vec![i],
                });
            }
            out.extend_from_slice(x.row(i));
        }
        Tensor::new(&[idx.len(), c], out)
    }

    pub fn outer_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (ta, j) = a.dims2()?;
        let (ub, j2) = b.dims2()?;
        if j != j2 {
            return Err(shape_err("outer_add", a, b));
        }
        let mut out = Vec::with_capacity(ta * ub * j);
        for t in 0..ta {
            let ar = a.row(t);
            for u in 0..ub {
                out.extend(ar.iter().zip(b.row(u)).map(|(x, y)| x + y));
            }
        }
        Tensor::new(&[ta * ub, j], out)
    }

    pub fn silu(x: &Tensor) -> Tensor {
        x.map(|v| v * math::sigmoid(v))
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_graph(&self, other: &Var<'g>) -> Result<()> {
        if core::ptr::eq(self.graph, other.graph) {
            Ok(())
        } else {
            Err(contract("vars belong to different graphs"))
        }
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'g> {
        let ng = self.graph.needs(self.id);
        self.graph.push(value, op, ng)
    }

    fn binary_node(&self, other: &Var<'g>, value: Tensor, op: Op) -> Result<Var<'g>> {
        self.same_graph(other)?;
        let ng = self.graph.needs(self.id) || self.graph.needs(other.id);
        Ok(self.graph.push(value, op, ng))
    }

    pub fn matmul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let v = self.value().matmul(&other.value())?;
        self.binary_node(other, v, Op::MatMul(self.id, other.id))
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let v = self.value().matmul_nt(&other.value())?;
        self.binary_node(other, v, Op::MatMulNt(self.id, other.id))
    }

    pub fn add(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let v = fwd::binary("add", &self.value(), &other.value(), |a, b| a + b)?;
        self.binary_node(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let v = fwd::binary("sub", &self.value(), &other.value(), |a, b| a - b)?;
        self.binary_node(other, v, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let v = fwd::binary("mul", &self.value(), &other.value(), |a, b| a * b)?;
        self.binary_node(other, v, Op::Mul(self.id, other.id))
    }

    /// Adds a length-`n` bias to every row of an `[m×n]` matrix.
    pub fn add_bias(&self, bias: &Var<'g>) -> Result<Var<'g>> {
        let v = fwd::add_bias(&self.value(), &bias.value())?;
        self.binary_node(bias, v, Op::AddBias(self.id, bias.id))
    }

    pub fn scale(&self, c: f64) -> Var<'g> {
        let v = self.value().map(|x| c * x);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn tanh(&self) -> Var<'g> {
        let v = self.value().map(math::tanh);
        self.unary(v, Op::Tanh(self.id))
    }

    pub fn sigmoid(&self) -> Var<'g> {
        let v = self.value().map(math::sigmoid);
        self.unary(v, Op::Sigmoid(self.id))
    }

    /// `x · sigmoid(x)`
    pub fn silu(&self) -> Var<'g> {
        let v = fwd::silu(&self.value());
        self.unary(v, Op::Silu(self.id))
    }

    pub fn softmax(&self) -> Result<Var<'g>> {
        let v = self.value().softmax()?;
        Ok(self.unary(v, Op::Softmax(self.id)))
    }

    pub fn log_softmax(&self) -> Result<Var<'g>> {
        let v = self.value().log_softmax()?;
        Ok(self.unary(v, Op::LogSoftmax(self.id)))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&self, gain: &Var<'g>, bias: &Var<'g>) -> Result<Var<'g>> {
        self.same_graph(gain)?;
        self.same_graph(bias)?;
        let (v, xhat, inv_std) = fwd::layer_norm(&self.value(), &gain.value(), &bias.value())?;
        let g = self.graph;
        let ng = g.needs(self.id) || g.needs(gain.id) || g.needs(bias.id);
        Ok(g.push(
            v,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    pub fn sum(&self) -> Var<'g> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn cols(&self, start: usize, len: usize) -> Result<Var<'g>> {
        let v = fwd::cols(&self.value(), start, len)?;
        Ok(self.unary(v, Op::Cols { x: self.id, start }))
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'g>> {
        let v = fwd::gather_rows(&self.value(), idx)?;
        Ok(self.unary(
            v,
            Op::GatherRows {
                x: self.id,
                idx: idx.to_vec(),
            },
        ))
    }

    /// `[T×J] ⊕ [U×J] → [(T·U)×J]` with row `t·U + u` equal to `a[t] + b[u]`.
    pub fn outer_add(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let v = fwd::outer_add(&self.value(), &other.value())?;
        self.binary_node(other, v, Op::OuterAdd(self.id, other.id))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g>> {
        let v = (*self.value()).clone().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    pub fn concat_cols(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts.first().ok_or(Error::EmptyInput("concat_cols"))?;
        let vals: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = vals.iter().map(|v| &**v).collect();
        let v = fwd::concat_cols(&refs)?;
        let g = first.graph;
        let ng = parts.iter().any(|p| g.needs(p.id));
        Ok(g.push(v, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), ng))
    }

    pub fn concat_rows(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts.first().ok_or(Error::EmptyInput("concat_rows"))?;
        let vals: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = vals.iter().map(|v| &**v).collect();
        let v = fwd::concat_rows(&refs)?;
        let g = first.graph;
        let ng = parts.iter().any(|p| g.needs(p.id));
        Ok(g.push(v, Op::ConcatRows(parts.iter().map(|p| p.id).collect()), ng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf<'g>(g: &'g Graph, shape: &[usize], data: &[f64]) -> Var<'g> {
        g.leaf(Tensor::new(shape, data.to_vec()).unwrap().with_requires_grad(true))
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let g = Graph::new();
        let x = leaf(&g, &[3], &[1.0, -2.0, 0.5]);
        let y = x.sum();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_sum_of_squares_is_two_x() {
        let g = Graph::new();
        let x = leaf(&g, &[3], &[1.0, -2.0, 0.5]);
        let y = x.mul(&x).unwrap().sum();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let g = Graph::new();
        let x = leaf(&g, &[2], &[1.0, 2.0]);
        let y = x.sum();
        g.backward(y).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
        g.reset_grads();
        g.backward(y).unwrap();
    }

    #[test]
    fn backward_requires_scalar_root() {
        let g = Graph::new();
        let x = leaf(&g, &[2], &[1.0, 2.0]);
        assert!(matches!(g.backward(x.tanh()), Err(Error::Contract(_))));
    }

    #[test]
    fn matmul_grads_are_ones_times_bt() {
        let g = Graph::new();
        let a = leaf(&g, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = leaf(&g, &[2, 3], &[0.5, -1.0, 2.0, 1.5, 0.0, -0.5]);
        g.backward(a.matmul(&b).unwrap().sum()).unwrap();
        // ones[2×3] · bᵀ: each row = row sums of b.
        assert_eq!(g.grad(a).unwrap().data(), &[1.5, 1.0, 1.5, 1.0]);
    }

    #[test]
    fn sigmoid_tanh_at_zero() {
        let g = Graph::new();
        let x = leaf(&g, &[1], &[0.0]);
        let s = x.sigmoid();
        assert_eq!(s.item().unwrap(), 0.5);
        assert_eq!(x.tanh().item().unwrap(), 0.0);
        g.backward(s.sum()).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn add_zero_is_identity_and_broadcast_is_narrow() {
        let g = Graph::new();
        let h = leaf(&g, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let z = g.constant(Tensor::zeros(&[2, 2]));
        assert_eq!(h.add(&z).unwrap().value().data(), h.value().data());
        let s = g.constant(Tensor::scalar(1.0));
        assert_eq!(h.add(&s).unwrap().value().data(), &[2.0, 3.0, 4.0, 5.0]);
        let bad = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(h.add(&bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn frozen_leaves_get_no_grad() {
        let g = Graph::new();
        let x = leaf(&g, &[2], &[1.0, 2.0]);
        let w = g.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
        g.backward(x.mul(&w).unwrap().sum()).unwrap();
        assert!(g.grad(w).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 4.0]);
    }
}
