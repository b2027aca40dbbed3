use alloc::format;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::math;
use crate::numkit::{Backend, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn apply<B: Backend>(&self, be: &B, x: &B::T) -> Result<B::T> {
        be.linear(x, self.w, self.b)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: ParamId,
    pub b: ParamId,
}

impl Norm {
    pub fn apply<B: Backend>(&self, be: &B, x: &B::T) -> Result<B::T> {
        be.layer_norm(x, &be.param(self.g), &be.param(self.b))
    }
}

/// Adds freshly initialized parameters to a store.
pub(crate) struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: &str, shape: &[usize], a: f64) -> Result<ParamId> {
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-a..a));
        self.store.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(shape))
    }

    pub fn full(&mut self, name: &str, shape: &[usize], v: f64) -> Result<ParamId> {
        self.store.add(name, Tensor::full(shape, v))
    }

    /// Glorot-uniform weight `[fan_in × fan_out]`.
    pub fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        self.uniform(name, &[fan_in, fan_out], a)
    }

    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Linear> {
        let w = self.weight(&format!("{name}.w"), fan_in, fan_out)?;
        let b = if bias {
            Some(self.zeros(&format!("{name}.b"), &[fan_out])?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn norm(&mut self, name: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            g: self.full(&format!("{name}.g"), &[dim], 1.0)?,
            b: self.zeros(&format!("{name}.b"), &[dim])?,
        })
    }

    /// Embedding table with unit-variance entries.
    pub fn embedding(&mut self, name: &str, rows: usize, dim: usize) -> Result<ParamId> {
        self.uniform(name, &[rows, dim], math::sqrt(3.0))
    }
}
