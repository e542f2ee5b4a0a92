use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{EncoderConfig, NUM_SEGMENTS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Standard deviation of the truncated-normal weight initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Tensors per transformer layer, in layout order.
pub(crate) const PER_LAYER: usize = 16;
/// Leading embedding tensors: word, position, segment, norm gain, norm bias.
pub(crate) const EMBEDDING_TENSORS: usize = 5;

/// Offsets of a layer's tensors relative to the start of that layer.
pub(crate) mod slot {
    pub const Q_W: usize = 0;
    pub const Q_B: usize = 1;
    pub const K_W: usize = 2;
    pub const K_B: usize = 3;
    pub const V_W: usize = 4;
    pub const V_B: usize = 5;
    pub const O_W: usize = 6;
    pub const O_B: usize = 7;
    pub const ATTN_LN_G: usize = 8;
    pub const ATTN_LN_B: usize = 9;
    pub const FFN_IN_W: usize = 10;
    pub const FFN_IN_B: usize = 11;
    pub const FFN_OUT_W: usize = 12;
    pub const FFN_OUT_B: usize = 13;
    pub const FFN_LN_G: usize = 14;
    pub const FFN_LN_B: usize = 15;
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

/// Ordered parameter layout for `config`. Every shape is a pure function
/// of the config; the order is the storage and checkpoint order.
pub fn param_layout(config: &EncoderConfig) -> Vec<ParamSpec> {
    let d = config.hidden_dim;
    let f = config.ffn_dim;
    let mut out = vec![
        spec("embeddings.word", &[config.vocab_size, d], Init::Normal),
        spec("embeddings.position", &[config.max_seq_len, d], Init::Normal),
        spec("embeddings.segment", &[NUM_SEGMENTS, d], Init::Normal),
        spec("embeddings.norm.gain", &[d], Init::Ones),
        spec("embeddings.norm.bias", &[d], Init::Zeros),
    ];
    for l in 0..config.num_layers {
        let p = |s: &str| format!("layer.{l}.{s}");
        out.extend([
            spec(p("attention.query.weight"), &[d, d], Init::Normal),
            spec(p("attention.query.bias"), &[d], Init::Zeros),
            spec(p("attention.key.weight"), &[d, d], Init::Normal),
            spec(p("attention.key.bias"), &[d], Init::Zeros),
            spec(p("attention.value.weight"), &[d, d], Init::Normal),
            spec(p("attention.value.bias"), &[d], Init::Zeros),
            spec(p("attention.output.weight"), &[d, d], Init::Normal),
            spec(p("attention.output.bias"), &[d], Init::Zeros),
            spec(p("attention.norm.gain"), &[d], Init::Ones),
            spec(p("attention.norm.bias"), &[d], Init::Zeros),
            spec(p("ffn.intermediate.weight"), &[d, f], Init::Normal),
            spec(p("ffn.intermediate.bias"), &[f], Init::Zeros),
            spec(p("ffn.output.weight"), &[f, d], Init::Normal),
            spec(p("ffn.output.bias"), &[d], Init::Zeros),
            spec(p("ffn.norm.gain"), &[d], Init::Ones),
            spec(p("ffn.norm.bias"), &[d], Init::Zeros),
        ]);
    }
    out.extend([
        spec("pooler.weight", &[d, d], Init::Normal),
        spec("pooler.bias", &[d], Init::Zeros),
        spec("classifier.weight", &[d, config.num_classes], Init::Normal),
        spec("classifier.bias", &[config.num_classes], Init::Zeros),
    ]);
    out
}

/// Parameters of a miniature BERT-style encoder plus pooler and classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    params: Vec<Tensor>,
}

impl EncoderModel {
    /// Builds a model with truncated-normal weights (σ = 0.02, cut at 2σ),
    /// zero biases and unit norm gains. Deterministic per `(config, seed)`.
    pub fn build(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = param_layout(config)
            .into_iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let data = match s.init {
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                    Init::Normal => (0..n).map(|_| truncated_normal(&mut rng) * INIT_STD).collect(),
                };
                Tensor::new(s.shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderModel {
            config: config.clone(),
            params,
        })
    }

    /// Assembles a model from tensors in [`param_layout`] order.
    pub fn from_params(config: EncoderConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for (s, t) in layout.iter().zip(&params) {
            if s.shape != t.shape() {
                return Err(Error::Dimension {
                    op: "from_params",
                    lhs: s.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(EncoderModel { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn layout(&self) -> Vec<ParamSpec> {
        param_layout(&self.config)
    }

    /// Total number of scalar parameters actually stored.
    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Index of a layer's first tensor (`layer` is 0-based).
    pub(crate) fn layer_base(layer: usize) -> usize {
        EMBEDDING_TENSORS + layer * PER_LAYER
    }

    /// Parameter tensors of a 0-based transformer layer.
    pub fn layer_params(&self, layer: usize) -> &[Tensor] {
        let base = Self::layer_base(layer);
        &self.params[base..base + PER_LAYER]
    }

    pub fn layer_params_mut(&mut self, layer: usize) -> &mut [Tensor] {
        let base = Self::layer_base(layer);
        &mut self.params[base..base + PER_LAYER]
    }

    pub(crate) fn head_base(&self) -> usize {
        Self::layer_base(self.config.num_layers)
    }

    pub fn pooler_weight(&self) -> &Tensor {
        &self.params[self.head_base()]
    }

    pub fn pooler_bias(&self) -> &Tensor {
        &self.params[self.head_base() + 1]
    }

    pub fn classifier_weight(&self) -> &Tensor {
        &self.params[self.head_base() + 2]
    }

    pub fn classifier_bias(&self) -> &Tensor {
        &self.params[self.head_base() + 3]
    }

    pub fn classifier_weight_mut(&mut self) -> &mut Tensor {
        let i = self.head_base() + 2;
        &mut self.params[i]
    }

    pub fn classifier_bias_mut(&mut self) -> &mut Tensor {
        let i = self.head_base() + 3;
        &mut self.params[i]
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}
