use std::collections::{BTreeMap, HashMap};

use super::kernels::{self, AttentionMask, NormStats};
use super::Tensor;
use crate::error::{Error, Result};

/// Stable identifier of a model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        stats: NormStats,
    },
    Gelu(usize),
    Tanh(usize),
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    SelectRows {
        x: usize,
        rows: Vec<usize>,
    },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        probs: Vec<f64>,
        mask: AttentionMask,
        heads: usize,
    },
    SoftmaxXent {
        logits: usize,
        targets: Tensor,
        temperature: f64,
        scale: f64,
        probs: Tensor,
    },
    NormalizedMse {
        x: usize,
        target: Tensor,
        xhat: Vec<f64>,
        norms: Vec<f64>,
        eps: f64,
    },
    Dropout {
        x: usize,
        mask: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Append-only record of a computation. Nodes are pushed in evaluation
/// order, so the node list is already topologically sorted.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: BTreeMap<ParamId, Tensor>,
    leaves: HashMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.leaves.get(&var.0)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &BTreeMap<ParamId, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable parameter; its gradient is reported under `id`.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.push_leaf(value, true, Some(id))
    }

    /// A differentiable input without a parameter id.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true, None)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false, None)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(value, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    /// Adds a `[c]` bias to every row of a `[r, c]` input.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = add_bias_value(self.value(x), self.value(bias))?;
        Ok(self.push(value, Op::AddBias(x.0, bias.0), &[x.0, bias.0]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale(x.0, c), &[x.0])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x.0), &[x.0])
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (value, stats) = kernels::layer_norm_with_stats(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                stats,
            },
            &[x.0, gain.0, bias.0],
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = kernels::gelu(self.value(x));
        self.push(value, Op::Gelu(x.0), &[x.0])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = kernels::tanh(self.value(x));
        self.push(value, Op::Tanh(x.0), &[x.0])
    }

    /// Rows of `table` selected by `ids` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let value = gather_value(self.value(table), ids)?;
        Ok(self.push(
            value,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        ))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let value = gather_value(self.value(x), rows)?;
        Ok(self.push(
            value,
            Op::SelectRows {
                x: x.0,
                rows: rows.to_vec(),
            },
            &[x.0],
        ))
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: &AttentionMask, heads: usize) -> Result<Var> {
        let (value, probs) = kernels::attention_forward(self.value(q), self.value(k), self.value(v), mask, heads)?;
        Ok(self.push(
            value,
            Op::Attention {
                q: q.0,
                k: k.0,
                v: v.0,
                probs,
                mask: mask.clone(),
                heads,
            },
            &[q.0, k.0, v.0],
        ))
    }

    /// Attention probabilities recorded by an attention node, laid out as
    /// `[batch, heads, seq, seq]`.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// `scale · Σ_rows Σ_c −targets[c] · log softmax(logits / temperature)[c]`.
    ///
    /// `targets` is a constant with the shape of `logits`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Tensor, temperature: f64, scale: f64) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: z.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        let logp = kernels::log_softmax_rows(z, temperature)?;
        let probs = logp.map(f64::exp);
        let total = targets
            .data()
            .iter()
            .zip(logp.data())
            .fold(0.0, |s, (&t, &lp)| s - t * lp);
        Ok(self.push(
            Tensor::scalar(scale * total),
            Op::SoftmaxXent {
                logits: logits.0,
                targets: targets.clone(),
                temperature,
                scale,
                probs,
            },
            &[logits.0],
        ))
    }

    /// `Σ_rows ‖x̂ − t̂‖²` where each row is divided by `max(‖row‖₂, eps)`.
    /// `target` is a constant with the shape of `x`.
    pub fn normalized_mse(&mut self, x: Var, target: &Tensor, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(Error::Dimension {
                op: "normalized_mse",
                lhs: xv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let (xhat, norms) = normalize_rows(xv, eps);
        let (that, _) = normalize_rows(target, eps);
        let total = xhat.iter().zip(&that).fold(0.0, |s, (&a, &b)| s + (a - b) * (a - b));
        Ok(self.push(
            Tensor::scalar(total),
            Op::NormalizedMse {
                x: x.0,
                target: Tensor::new(target.shape().to_vec(), that)?,
                xhat,
                norms,
                eps,
            },
            &[x.0],
        ))
    }

    /// Multiplies by a fixed mask (already scaled by `1 / (1 - p)`).
    pub fn dropout(&mut self, x: Var, mask: Tensor) -> Result<Var> {
        let value = self.value(x).mul(&mask)?;
        Ok(self.push(value, Op::Dropout { x: x.0, mask }, &[x.0]))
    }

    /// Reverse sweep from a scalar `loss`. Every node is visited once, in
    /// reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if let Some(id) = node.param {
                        out.params.insert(id, g.clone());
                    }
                    out.leaves.insert(i, g);
                }
                &Op::MatMul(a, b) => {
                    let av = &self.nodes[a].value;
                    let bv = &self.nodes[b].value;
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let n = bv.shape()[1];
                    if self.nodes[a].requires_grad {
                        let bt = kernels::transpose(bv.data(), k, n);
                        let mut ga = vec![0.0; m * k];
                        kernels::gemm(g.data(), &bt, &mut ga, n, k);
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.nodes[b].requires_grad {
                        let mut gb = vec![0.0; k * n];
                        kernels::gemm_tn(av.data(), g.data(), &mut gb, k, n);
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                &Op::Add(a, b) => {
                    self.accumulate(&mut grads, a, g.data().to_vec());
                    self.accumulate(&mut grads, b, g.into_data());
                }
                &Op::AddBias(x, bias) => {
                    let gb = column_sums(&g);
                    self.accumulate(&mut grads, bias, gb);
                    self.accumulate(&mut grads, x, g.into_data());
                }
                &Op::Mul(a, b) => {
                    let av = &self.nodes[a].value;
                    let bv = &self.nodes[b].value;
                    self.accumulate(&mut grads, a, g.mul(bv)?.into_data());
                    self.accumulate(&mut grads, b, g.mul(av)?.into_data());
                }
                &Op::Scale(x, c) => {
                    self.accumulate(&mut grads, x, g.scale(c).into_data());
                }
                &Op::Sum(x) => {
                    let gs = g.data()[0];
                    let n = self.nodes[x].value.len();
                    self.accumulate(&mut grads, x, vec![gs; n]);
                }
                Op::LayerNorm { x, gain, bias, stats } => {
                    let gain_v = self.nodes[*gain].value.data();
                    let d = gain_v.len();
                    let mut gx = vec![0.0; g.len()];
                    let mut ggain = vec![0.0; d];
                    let mut gbias = vec![0.0; d];
                    let mut gxhat = vec![0.0; d];
                    for (r, ((g_row, xh_row), gx_row)) in g
                        .data()
                        .chunks_exact(d)
                        .zip(stats.xhat.chunks_exact(d))
                        .zip(gx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        let mut sum_g = 0.0;
                        let mut sum_gx = 0.0;
                        for j in 0..d {
                            ggain[j] += g_row[j] * xh_row[j];
                            gbias[j] += g_row[j];
                            gxhat[j] = g_row[j] * gain_v[j];
                            sum_g += gxhat[j];
                            sum_gx += gxhat[j] * xh_row[j];
                        }
                        let mean_g = sum_g / d as f64;
                        let mean_gx = sum_gx / d as f64;
                        let r_std = stats.inv_std[r];
                        for j in 0..d {
                            gx_row[j] = r_std * (gxhat[j] - mean_g - xh_row[j] * mean_gx);
                        }
                    }
                    self.accumulate(&mut grads, *x, gx);
                    self.accumulate(&mut grads, *gain, ggain);
                    self.accumulate(&mut grads, *bias, gbias);
                }
                &Op::Gelu(x) => {
                    let xv = self.nodes[x].value.data();
                    let gx = g
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(&gi, &xi)| gi * kernels::gelu_derivative(xi))
                        .collect();
                    self.accumulate(&mut grads, x, gx);
                }
                &Op::Tanh(x) => {
                    let gx = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&gi, &y)| gi * (1.0 - y * y))
                        .collect();
                    self.accumulate(&mut grads, x, gx);
                }
                Op::Gather { table: src, ids } | Op::SelectRows { x: src, rows: ids } => {
                    let src_v = &self.nodes[*src].value;
                    let d = src_v.cols();
                    let mut gt = vec![0.0; src_v.len()];
                    for (&id, g_row) in ids.iter().zip(g.data().chunks_exact(d)) {
                        for (t, &v) in gt[id * d..(id + 1) * d].iter_mut().zip(g_row) {
                            *t += v;
                        }
                    }
                    self.accumulate(&mut grads, *src, gt);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    probs,
                    mask,
                    heads,
                } => {
                    let (gq, gk, gv) = kernels::attention_backward(
                        &g,
                        &self.nodes[*q].value,
                        &self.nodes[*k].value,
                        &self.nodes[*v].value,
                        probs,
                        mask,
                        *heads,
                    );
                    self.accumulate(&mut grads, *q, gq);
                    self.accumulate(&mut grads, *k, gk);
                    self.accumulate(&mut grads, *v, gv);
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    temperature,
                    scale,
                    probs,
                } => {
                    let c = targets.cols();
                    let factor = g.data()[0] * scale / temperature;
                    let mut gz = Vec::with_capacity(targets.len());
                    for (t_row, p_row) in targets.data().chunks_exact(c).zip(probs.data().chunks_exact(c)) {
                        let mass = t_row.iter().fold(0.0, |s, &t| s + t);
                        gz.extend(t_row.iter().zip(p_row).map(|(&t, &p)| factor * (p * mass - t)));
                    }
                    self.accumulate(&mut grads, *logits, gz);
                }
                Op::NormalizedMse {
                    x,
                    target,
                    xhat,
                    norms,
                    eps,
                } => {
                    let d = target.cols();
                    let gs = g.data()[0];
                    let mut gx = Vec::with_capacity(xhat.len());
                    for ((xh, th), &norm) in xhat.chunks_exact(d).zip(target.data().chunks_exact(d)).zip(norms) {
                        let r: Vec<f64> = xh.iter().zip(th).map(|(&a, &b)| 2.0 * gs * (a - b)).collect();
                        if norm > *eps {
                            let proj = xh.iter().zip(&r).fold(0.0, |s, (&a, &b)| s + a * b);
                            gx.extend(xh.iter().zip(&r).map(|(&a, &ri)| (ri - a * proj) / norm));
                        } else {
                            gx.extend(r.iter().map(|&ri| ri / eps));
                        }
                    }
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Dropout { x, mask } => {
                    self.accumulate(&mut grads, *x, g.mul(mask)?.into_data());
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], idx: usize, data: Vec<f64>) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        match &mut grads[idx] {
            Some(existing) => {
                for (e, v) in existing.data_mut().iter_mut().zip(data) {
                    *e += v;
                }
            }
            slot @ None => {
                let shape = self.nodes[idx].value.shape().to_vec();
                *slot = Some(Tensor::new(shape, data).expect("gradient matches node shape"));
            }
        }
    }
}

pub(crate) fn add_bias_value(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = x.cols();
    if bias.len() != c {
        return Err(Error::Dimension {
            op: "add_bias",
            lhs: x.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn gather_value(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    let d = table.cols();
    let rows = table.rows();
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        if id >= rows {
            return Err(Error::Input(format!("row index {id} out of range for {rows} rows")));
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), d], out)
}

pub(crate) fn normalize_rows(x: &Tensor, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let mut out = Vec::with_capacity(x.len());
    let mut norms = Vec::with_capacity(x.rows());
    for row in x.data().chunks_exact(d) {
        let norm = row.iter().fold(0.0, |s, &v| s + v * v).sqrt();
        let denom = norm.max(eps);
        out.extend(row.iter().map(|&v| v / denom));
        norms.push(norm);
    }
    (out, norms)
}

fn column_sums(g: &Tensor) -> Vec<f64> {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for row in g.data().chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}
