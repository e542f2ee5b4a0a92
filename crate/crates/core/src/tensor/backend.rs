use std::rc::Rc;

use super::kernels::{self, AttentionMask};
use super::tape::{gather_value, ParamId, Tape, Var};
use super::Tensor;
use crate::error::Result;

/// The set of operations a model forward pass is written against.
///
/// [`Tape`] records every step for differentiation; [`Eager`] evaluates
/// directly and lets intermediates drop as soon as they go out of scope.
pub trait Backend {
    type Value: Clone;

    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;
    fn param(&mut self, id: ParamId, t: &Tensor) -> Self::Value;
    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add_bias(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value>;
    fn layer_norm(&mut self, x: &Self::Value, gain: &Self::Value, bias: &Self::Value, eps: f64) -> Result<Self::Value>;
    fn gelu(&mut self, x: &Self::Value) -> Self::Value;
    fn tanh(&mut self, x: &Self::Value) -> Self::Value;
    fn gather_rows(&mut self, table: &Self::Value, ids: &[usize]) -> Result<Self::Value>;
    fn select_rows(&mut self, x: &Self::Value, rows: &[usize]) -> Result<Self::Value>;
    fn attention(
        &mut self,
        q: &Self::Value,
        k: &Self::Value,
        v: &Self::Value,
        mask: &AttentionMask,
        heads: usize,
    ) -> Result<Self::Value>;
    fn dropout(&mut self, x: &Self::Value, mask: Tensor) -> Result<Self::Value>;

    /// Attention probabilities of a value produced by [`Backend::attention`],
    /// when the backend keeps them.
    fn attention_probs(&self, _v: &Self::Value) -> Option<Vec<f64>> {
        None
    }
}

impl Backend for Tape {
    type Value = Var;

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        Tape::value(self, *v)
    }

    fn param(&mut self, id: ParamId, t: &Tensor) -> Var {
        Tape::param(self, id, t.clone())
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::matmul(self, *a, *b)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }

    fn add_bias(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        Tape::add_bias(self, *x, *bias)
    }

    fn layer_norm(&mut self, x: &Var, gain: &Var, bias: &Var, eps: f64) -> Result<Var> {
        Tape::layer_norm(self, *x, *gain, *bias, eps)
    }

    fn gelu(&mut self, x: &Var) -> Var {
        Tape::gelu(self, *x)
    }

    fn tanh(&mut self, x: &Var) -> Var {
        Tape::tanh(self, *x)
    }

    fn gather_rows(&mut self, table: &Var, ids: &[usize]) -> Result<Var> {
        Tape::gather_rows(self, *table, ids)
    }

    fn select_rows(&mut self, x: &Var, rows: &[usize]) -> Result<Var> {
        Tape::select_rows(self, *x, rows)
    }

    fn attention(&mut self, q: &Var, k: &Var, v: &Var, mask: &AttentionMask, heads: usize) -> Result<Var> {
        Tape::attention(self, *q, *k, *v, mask, heads)
    }

    fn dropout(&mut self, x: &Var, mask: Tensor) -> Result<Var> {
        Tape::dropout(self, *x, mask)
    }

    fn attention_probs(&self, v: &Var) -> Option<Vec<f64>> {
        Tape::attention_probs(self, *v).map(<[f64]>::to_vec)
    }
}

/// Direct evaluation without recording.
#[derive(Debug, Default)]
pub struct Eager {
    keep_attention: bool,
    attention: Vec<Vec<f64>>,
}

impl Eager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Retains the probabilities of every attention call, in call order.
    pub fn keeping_attention() -> Self {
        Eager {
            keep_attention: true,
            attention: Vec::new(),
        }
    }

    pub fn take_attention(&mut self) -> Vec<Vec<f64>> {
        std::mem::take(&mut self.attention)
    }
}

impl Backend for Eager {
    type Value = Rc<Tensor>;

    fn value<'a>(&'a self, v: &'a Rc<Tensor>) -> &'a Tensor {
        v
    }

    fn param(&mut self, _id: ParamId, t: &Tensor) -> Rc<Tensor> {
        Rc::new(t.clone())
    }

    fn matmul(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        a.matmul(b).map(Rc::new)
    }

    fn add(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        a.add(b).map(Rc::new)
    }

    fn add_bias(&mut self, x: &Rc<Tensor>, bias: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        x.add_bias(bias).map(Rc::new)
    }

    fn layer_norm(&mut self, x: &Rc<Tensor>, gain: &Rc<Tensor>, bias: &Rc<Tensor>, eps: f64) -> Result<Rc<Tensor>> {
        kernels::layer_norm(x, gain, bias, eps).map(Rc::new)
    }

    fn gelu(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::gelu(x))
    }

    fn tanh(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::tanh(x))
    }

    fn gather_rows(&mut self, table: &Rc<Tensor>, ids: &[usize]) -> Result<Rc<Tensor>> {
        gather_value(table, ids).map(Rc::new)
    }

    fn select_rows(&mut self, x: &Rc<Tensor>, rows: &[usize]) -> Result<Rc<Tensor>> {
        gather_value(x, rows).map(Rc::new)
    }

    fn attention(
        &mut self,
        q: &Rc<Tensor>,
        k: &Rc<Tensor>,
        v: &Rc<Tensor>,
        mask: &AttentionMask,
        heads: usize,
    ) -> Result<Rc<Tensor>> {
        let (ctx, probs) = kernels::attention_forward(q, k, v, mask, heads)?;
        if self.keep_attention {
            self.attention.push(probs);
        }
        Ok(Rc::new(ctx))
    }

    fn dropout(&mut self, x: &Rc<Tensor>, mask: Tensor) -> Result<Rc<Tensor>> {
        x.mul(&mask).map(Rc::new)
    }
}
