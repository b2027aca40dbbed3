use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::graph::{fwd, Graph, Var};
use super::kernels;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};
use crate::math;

/// Operations the model is written against.
///
/// [`Record`] builds a differentiable [`Graph`]; [`Eval`] evaluates eagerly.
/// Both call the same forward kernels, so their outputs are bit-identical.
pub trait Backend {
    type T: Clone;

    fn param(&self, id: ParamId) -> Self::T;
    fn constant(&self, t: Tensor) -> Self::T;
    fn value(&self, x: &Self::T) -> Arc<Tensor>;

    fn matmul(&self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn matmul_nt(&self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn add(&self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn add_bias(&self, x: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn scale(&self, x: &Self::T, c: f64) -> Self::T;
    fn tanh(&self, x: &Self::T) -> Self::T;
    fn sigmoid(&self, x: &Self::T) -> Self::T;
    fn silu(&self, x: &Self::T) -> Self::T;
    fn softmax(&self, x: &Self::T) -> Result<Self::T>;
    fn log_softmax(&self, x: &Self::T) -> Result<Self::T>;
    fn layer_norm(&self, x: &Self::T, gain: &Self::T, bias: &Self::T) -> Result<Self::T>;
    fn cols(&self, x: &Self::T, start: usize, len: usize) -> Result<Self::T>;
    fn concat_cols(&self, parts: &[Self::T]) -> Result<Self::T>;
    fn concat_rows(&self, parts: &[Self::T]) -> Result<Self::T>;
    fn gather_rows(&self, x: &Self::T, idx: &[usize]) -> Result<Self::T>;
    fn outer_add(&self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn reshape(&self, x: &Self::T, shape: &[usize]) -> Result<Self::T>;
    /// Transducer loss of a flat `[frames·(U+1), V]` log-prob matrix.
    fn transducer_loss(&self, log_probs: &Self::T, frames: usize, target: &[usize]) -> Result<Self::T>;

    /// Multi-head scaled dot-product attention of `q` over `k, v`, or over
    /// their rows `rows` (in that order) when given. Also returns the
    /// head-averaged weights when asked.
    fn attention(
        &self,
        q: &Self::T,
        k: &Self::T,
        v: &Self::T,
        rows: Option<&[usize]>,
        heads: usize,
        want_weights: bool,
    ) -> Result<(Self::T, Option<Tensor>)> {
        let (k, v) = match rows {
            Some(r) => (self.gather_rows(k, r)?, self.gather_rows(v, r)?),
            None => (k.clone(), v.clone()),
        };
        let width = self.value(q).shape()[1];
        let dh = width / heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let mut outs = Vec::with_capacity(heads);
        let mut avg: Option<Tensor> = None;
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q.clone(), k.clone(), v.clone())
            } else {
                (self.cols(q, h * dh, dh)?, self.cols(&k, h * dh, dh)?, self.cols(&v, h * dh, dh)?)
            };
            let scores = self.scale(&self.matmul_nt(&qh, &kh)?, scale);
            let a = self.softmax(&scores)?;
            if want_weights {
                let w = self.value(&a);
                match &mut avg {
                    None => avg = Some((*w).clone().with_requires_grad(false)),
                    Some(acc) => acc.data_mut().iter_mut().zip(w.data()).for_each(|(x, y)| *x += y),
                }
            }
            outs.push(self.matmul(&a, &vh)?);
        }
        let out = if heads == 1 { outs.pop().expect("one head") } else { self.concat_cols(&outs)? };
        if let Some(acc) = &mut avg {
            let inv = 1.0 / heads as f64;
            acc.data_mut().iter_mut().for_each(|x| *x *= inv);
        }
        Ok((out, avg))
    }

    /// `x · w + b` for an `[m×k]` input, `[k×n]` weight and `[n]` bias.
    fn linear(&self, x: &Self::T, w: ParamId, b: Option<ParamId>) -> Result<Self::T> {
        let y = self.matmul(x, &self.param(w))?;
        match b {
            Some(b) => self.add_bias(&y, &self.param(b)),
            None => Ok(y),
        }
    }
}

/// Eager evaluation over a parameter store.
pub struct Eval<'s> {
    store: &'s ParamStore,
}

impl<'s> Eval<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store }
    }
}

impl Backend for Eval<'_> {
    type T = Arc<Tensor>;

    fn param(&self, id: ParamId) -> Self::T {
        self.store.shared(id)
    }

    fn constant(&self, t: Tensor) -> Self::T {
        Arc::new(t)
    }

    fn value(&self, x: &Self::T) -> Arc<Tensor> {
        x.clone()
    }

    fn matmul(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(a.matmul(b)?))
    }

    fn matmul_nt(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(a.matmul_nt(b)?))
    }

    fn add(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(fwd::binary("add", a, b, |x, y| x + y)?))
    }

    fn mul(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(fwd::binary("mul", a, b, |x, y| x * y)?))
    }

    fn add_bias(&self, x: &Self::T, b: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(fwd::add_bias(x, b)?))
    }

    fn scale(&self, x: &Self::T, c: f64) -> Self::T {
        Arc::new(x.map(|v| c * v))
    }

    fn tanh(&self, x: &Self::T) -> Self::T {
        Arc::new(x.map(math::tanh))
    }

    fn sigmoid(&self, x: &Self::T) -> Self::T {
        Arc::new(x.map(math::sigmoid))
    }

    fn silu(&self, x: &Self::T) -> Self::T {
        Arc::new(fwd::silu(x))
    }

    fn softmax(&self, x: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(x.softmax()?))
    }

    fn log_softmax(&self, x: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(x.log_softmax()?))
    }

    fn layer_norm(&self, x: &Self::T, gain: &Self::T, bias: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(fwd::layer_norm(x, gain, bias)?.0))
    }

    fn cols(&self, x: &Self::T, start: usize, len: usize) -> Result<Self::T> {
        Ok(Arc::new(fwd::cols(x, start, len)?))
    }

    fn concat_cols(&self, parts: &[Self::T]) -> Result<Self::T> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| &**p).collect();
        Ok(Arc::new(fwd::concat_cols(&refs)?))
    }

    fn concat_rows(&self, parts: &[Self::T]) -> Result<Self::T> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| &**p).collect();
        Ok(Arc::new(fwd::concat_rows(&refs)?))
    }

    fn gather_rows(&self, x: &Self::T, idx: &[usize]) -> Result<Self::T> {
        Ok(Arc::new(fwd::gather_rows(x, idx)?))
    }

    fn outer_add(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        Ok(Arc::new(fwd::outer_add(a, b)?))
    }

    fn reshape(&self, x: &Self::T, shape: &[usize]) -> Result<Self::T> {
        Ok(Arc::new((**x).clone().reshape(shape)?))
    }

    fn transducer_loss(&self, log_probs: &Self::T, frames: usize, target: &[usize]) -> Result<Self::T> {
        Ok(Arc::new(Tensor::scalar(crate::rnnt::flat_loss(log_probs, frames, target)?)))
    }

    fn attention(
        &self,
        q: &Self::T,
        k: &Self::T,
        v: &Self::T,
        rows: Option<&[usize]>,
        heads: usize,
        want_weights: bool,
    ) -> Result<(Self::T, Option<Tensor>)> {
        let (m, d) = q.dims2()?;
        let (n, dk) = k.dims2()?;
        if dk != d || v.shape() != k.shape() || heads == 0 || d % heads != 0 {
            return Err(Error::Shape { op: "attention", left: q.shape().to_vec(), right: k.shape().to_vec() });
        }
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => {
                if let Some(&bad) = r.iter().find(|&&i| i >= n) {
                    return Err(contract(alloc::format!("attention row {bad} outside {n} keys")));
                }
                r
            }
            None => {
                all = (0..n).collect();
                &all
            }
        };
        let mut out = vec![0.0; m * d];
        let mut w = want_weights.then(|| vec![0.0; m * rows.len()]);
        kernels::attention(q.data(), k.data(), v.data(), m, d, rows, heads, &mut out, w.as_deref_mut());
        let w = w.map(|w| Tensor::new(&[m, rows.len()], w)).transpose()?;
        Ok((Arc::new(Tensor::new(&[m, d], out)?), w))
    }
}

/// Records onto a [`Graph`], binding parameters lazily on first use.
pub struct Record<'g> {
    graph: &'g Graph,
    store: &'g ParamStore,
    bound: RefCell<Vec<Option<Var<'g>>>>,
}

impl<'g> Record<'g> {
    pub fn new(graph: &'g Graph, store: &'g ParamStore) -> Self {
        Self {
            graph,
            store,
            bound: RefCell::new(vec![None; store.len()]),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Gradients of every bound, trainable parameter after `backward`.
    pub fn param_grads(&self) -> Vec<(ParamId, Vec<f64>)> {
        let bound = self.bound.borrow();
        let mut out = Vec::new();
        for (i, v) in bound.iter().enumerate() {
            if let Some(v) = v {
                if let Some(g) = self.graph.grad(*v) {
                    out.push((ParamId(i), g.into_data()));
                }
            }
        }
        out
    }
}

impl<'g> Backend for Record<'g> {
    type T = Var<'g>;

    fn param(&self, id: ParamId) -> Self::T {
        if let Some(v) = self.bound.borrow()[id.0] {
            return v;
        }
        let t = self.store.shared(id);
        let rg = t.requires_grad();
        let v = self.graph.leaf_shared(t, rg);
        self.bound.borrow_mut()[id.0] = Some(v);
        v
    }

    fn constant(&self, t: Tensor) -> Self::T {
        self.graph.constant(t)
    }

    fn value(&self, x: &Self::T) -> Arc<Tensor> {
        x.value()
    }

    fn matmul(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        a.matmul(b)
    }

    fn matmul_nt(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        a.matmul_nt(b)
    }

    fn add(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        a.add(b)
    }

    fn mul(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        a.mul(b)
    }

    fn add_bias(&self, x: &Self::T, b: &Self::T) -> Result<Self::T> {
        x.add_bias(b)
    }

    fn scale(&self, x: &Self::T, c: f64) -> Self::T {
        x.scale(c)
    }

    fn tanh(&self, x: &Self::T) -> Self::T {
        x.tanh()
    }

    fn sigmoid(&self, x: &Self::T) -> Self::T {
        x.sigmoid()
    }

    fn silu(&self, x: &Self::T) -> Self::T {
        x.silu()
    }

    fn softmax(&self, x: &Self::T) -> Result<Self::T> {
        x.softmax()
    }

    fn log_softmax(&self, x: &Self::T) -> Result<Self::T> {
        x.log_softmax()
    }

    fn layer_norm(&self, x: &Self::T, gain: &Self::T, bias: &Self::T) -> Result<Self::T> {
        x.layer_norm(gain, bias)
    }

    fn cols(&self, x: &Self::T, start: usize, len: usize) -> Result<Self::T> {
        x.cols(start, len)
    }

    fn concat_cols(&self, parts: &[Self::T]) -> Result<Self::T> {
        Var::concat_cols(parts)
    }

    fn concat_rows(&self, parts: &[Self::T]) -> Result<Self::T> {
        Var::concat_rows(parts)
    }

    fn gather_rows(&self, x: &Self::T, idx: &[usize]) -> Result<Self::T> {
        x.gather_rows(idx)
    }

    fn outer_add(&self, a: &Self::T, b: &Self::T) -> Result<Self::T> {
        a.outer_add(b)
    }

    fn reshape(&self, x: &Self::T, shape: &[usize]) -> Result<Self::T> {
        x.reshape(shape)
    }

    fn transducer_loss(&self, log_probs: &Self::T, frames: usize, target: &[usize]) -> Result<Self::T> {
        crate::rnnt::transducer_loss(self.graph, *log_probs, frames, target)
    }
}
