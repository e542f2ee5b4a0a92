use rand::Rng;

use super::config::NUM_SEGMENTS;
use super::model::{slot, EncoderModel, EMBEDDING_TENSORS, PER_LAYER};
use crate::error::{Error, Result};
use crate::tensor::{kernels, AttentionMask, Backend, Eager, ParamId, Tensor};

/// A batch of encoded sequences padded to a common length.
///
/// Position 0 of every sequence is the `[CLS]` token.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub token_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl InputBatch {
    pub fn new(
        batch_size: usize,
        seq_len: usize,
        token_ids: Vec<usize>,
        segment_ids: Vec<usize>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let n = batch_size * seq_len;
        if batch_size == 0 || seq_len == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if token_ids.len() != n || segment_ids.len() != n || mask.len() != n {
            return Err(Error::Input(format!(
                "batch of {batch_size}x{seq_len} needs {n} ids, segments and mask entries"
            )));
        }
        Ok(InputBatch {
            batch_size,
            seq_len,
            token_ids,
            segment_ids,
            mask,
        })
    }

    fn validate_for(&self, model: &EncoderModel) -> Result<()> {
        let c = model.config();
        if self.seq_len > c.max_seq_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max_seq_len {}",
                self.seq_len, c.max_seq_len
            )));
        }
        if let Some(&id) = self.token_ids.iter().find(|&&id| id >= c.vocab_size) {
            return Err(Error::Input(format!("token id {id} is outside the vocabulary of {}", c.vocab_size)));
        }
        if let Some(&s) = self.segment_ids.iter().find(|&&s| s >= NUM_SEGMENTS) {
            return Err(Error::Input(format!("segment id {s} is out of range")));
        }
        if let Some(b) = (0..self.batch_size).find(|&b| !self.mask[b * self.seq_len]) {
            return Err(Error::Input(format!("sequence {b} has a masked [CLS] position")));
        }
        Ok(())
    }

    fn cls_rows(&self) -> Vec<usize> {
        (0..self.batch_size).map(|b| b * self.seq_len).collect()
    }
}

/// Backend values produced by one forward pass.
pub struct EncoderOutput<V> {
    /// `[batch, d]` [CLS] state after each layer, first layer first.
    pub cls: Vec<V>,
    pub pooled: V,
    pub logits: V,
    /// Attention probabilities per layer when the backend keeps them.
    pub attention: Vec<Vec<f64>>,
}

/// Plain-data record of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `[batch, num_layers, d]`; entry `(i, j)` is example i's [CLS] state
    /// after layer j + 1.
    pub cls_states: Tensor,
    /// `[batch, num_classes]` raw classifier outputs.
    pub final_logits: Tensor,
    /// Per layer, `[batch, heads, seq, seq]`, when requested.
    pub attention: Option<Vec<Tensor>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.cls_states.shape()[0]
    }

    pub fn num_layers(&self) -> usize {
        self.cls_states.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.cls_states.shape()[2]
    }

    /// Example `i`'s `[num_layers, d]` matrix of [CLS] states.
    pub fn cls_matrix(&self, i: usize) -> Tensor {
        let (l, d) = (self.num_layers(), self.hidden_dim());
        Tensor::new(vec![l, d], self.cls_states.data()[i * l * d..(i + 1) * l * d].to_vec())
            .expect("trace slice has matching shape")
    }

    /// `[batch, d]` states after 1-based layer `layer`.
    pub fn layer_states(&self, layer: usize) -> Tensor {
        let (b, l, d) = (self.batch_size(), self.num_layers(), self.hidden_dim());
        let mut out = Vec::with_capacity(b * d);
        for i in 0..b {
            let start = (i * l + layer - 1) * d;
            out.extend_from_slice(&self.cls_states.data()[start..start + d]);
        }
        Tensor::new(vec![b, d], out).expect("layer slice has matching shape")
    }
}

/// Runs the post-layer-norm encoder stack on any backend.
///
/// With `dropout` set and a positive `dropout_prob`, inverted dropout is
/// applied after the embedding norm and after each attention and FFN
/// output projection.
pub fn forward_with<B: Backend>(
    model: &EncoderModel,
    backend: &mut B,
    batch: &InputBatch,
    mut dropout: Option<&mut dyn rand::RngCore>,
) -> Result<EncoderOutput<B::Value>> {
    batch.validate_for(model)?;
    let c = model.config();
    let eps = c.layer_norm_eps;
    let p: Vec<B::Value> = model
        .params()
        .iter()
        .enumerate()
        .map(|(i, t)| backend.param(ParamId(i), t))
        .collect();
    let mask = AttentionMask::new(batch.batch_size, batch.seq_len, batch.mask.clone())?;
    let positions: Vec<usize> = (0..batch.batch_size).flat_map(|_| 0..batch.seq_len).collect();
    let cls_rows = batch.cls_rows();

    let mut drop = |backend: &mut B, x: B::Value| -> Result<B::Value> {
        match dropout.as_deref_mut() {
            Some(rng) if c.dropout_prob > 0.0 => {
                let shape = backend.value(&x).shape().to_vec();
                let keep = 1.0 - c.dropout_prob;
                let data = (0..backend.value(&x).len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                backend.dropout(&x, Tensor::new(shape, data)?)
            }
            _ => Ok(x),
        }
    };

    let tok = backend.gather_rows(&p[0], &batch.token_ids)?;
    let pos = backend.gather_rows(&p[1], &positions)?;
    let seg = backend.gather_rows(&p[2], &batch.segment_ids)?;
    let sum = backend.add(&tok, &pos)?;
    let sum = backend.add(&sum, &seg)?;
    let x = backend.layer_norm(&sum, &p[3], &p[4], eps)?;
    let mut x = drop(backend, x)?;

    let mut cls = Vec::with_capacity(c.num_layers);
    let mut attention = Vec::new();
    for layer in 0..c.num_layers {
        let w = &p[EMBEDDING_TENSORS + layer * PER_LAYER..];
        let q = linear(backend, &x, &w[slot::Q_W], &w[slot::Q_B])?;
        let k = linear(backend, &x, &w[slot::K_W], &w[slot::K_B])?;
        let v = linear(backend, &x, &w[slot::V_W], &w[slot::V_B])?;
        let ctx = backend.attention(&q, &k, &v, &mask, c.num_heads)?;
        if let Some(probs) = backend.attention_probs(&ctx) {
            attention.push(probs);
        }
        let attn_out = linear(backend, &ctx, &w[slot::O_W], &w[slot::O_B])?;
        let attn_out = drop(backend, attn_out)?;
        let res = backend.add(&x, &attn_out)?;
        let h = backend.layer_norm(&res, &w[slot::ATTN_LN_G], &w[slot::ATTN_LN_B], eps)?;

        let inner = linear(backend, &h, &w[slot::FFN_IN_W], &w[slot::FFN_IN_B])?;
        let inner = backend.gelu(&inner);
        let ffn_out = linear(backend, &inner, &w[slot::FFN_OUT_W], &w[slot::FFN_OUT_B])?;
        let ffn_out = drop(backend, ffn_out)?;
        let res = backend.add(&h, &ffn_out)?;
        x = backend.layer_norm(&res, &w[slot::FFN_LN_G], &w[slot::FFN_LN_B], eps)?;
        cls.push(backend.select_rows(&x, &cls_rows)?);
    }

    let head = model.head_base();
    let last = cls.last().expect("config validation guarantees at least one layer").clone();
    let pooled = linear(backend, &last, &p[head], &p[head + 1])?;
    let pooled = backend.tanh(&pooled);
    let logits = linear(backend, &pooled, &p[head + 2], &p[head + 3])?;
    Ok(EncoderOutput {
        cls,
        pooled,
        logits,
        attention,
    })
}

fn linear<B: Backend>(backend: &mut B, x: &B::Value, w: &B::Value, b: &B::Value) -> Result<B::Value> {
    let y = backend.matmul(x, w)?;
    backend.add_bias(&y, b)
}

impl EncoderModel {
    /// Inference forward pass (no dropout, nothing recorded).
    pub fn forward(&self, batch: &InputBatch) -> Result<ForwardTrace> {
        self.trace(&mut Eager::new(), batch, false)
    }

    /// Like [`EncoderModel::forward`] but also returns attention maps.
    pub fn forward_with_attention(&self, batch: &InputBatch) -> Result<ForwardTrace> {
        self.trace(&mut Eager::keeping_attention(), batch, true)
    }

    fn trace(&self, backend: &mut Eager, batch: &InputBatch, keep: bool) -> Result<ForwardTrace> {
        let out = forward_with(self, backend, batch, None)?;
        let b = batch.batch_size;
        let d = self.config().hidden_dim;
        let l = out.cls.len();
        let mut cls_states = vec![0.0; b * l * d];
        for (j, layer) in out.cls.iter().enumerate() {
            for (i, row) in layer.data().chunks_exact(d).enumerate() {
                cls_states[(i * l + j) * d..][..d].copy_from_slice(row);
            }
        }
        let attention = keep.then(|| {
            let heads = self.config().num_heads;
            let s = batch.seq_len;
            backend
                .take_attention()
                .into_iter()
                .map(|p| Tensor::new(vec![b, heads, s, s], p).expect("attention layout"))
                .collect()
        });
        Ok(ForwardTrace {
            cls_states: Tensor::new(vec![b, l, d], cls_states)?,
            final_logits: (*out.logits).clone(),
            attention,
        })
    }

    /// Raw classifier outputs recomputed from the last-layer [CLS] states
    /// of `trace` through the tanh pooler.
    pub fn logits(&self, trace: &ForwardTrace) -> Result<Tensor> {
        if trace.num_layers() != self.num_layers() || trace.hidden_dim() != self.config().hidden_dim {
            return Err(Error::Contract("trace was not produced by this model".into()));
        }
        let last = trace.layer_states(trace.num_layers());
        let pooled = kernels::tanh(&last.matmul(self.pooler_weight())?.add_bias(self.pooler_bias())?);
        pooled.matmul(self.classifier_weight())?.add_bias(self.classifier_bias())
    }
}
