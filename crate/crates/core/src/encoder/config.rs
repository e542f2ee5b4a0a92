use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a BERT-style encoder with a classification head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout_prob: f64,
    #[serde(default = "default_layer_norm_eps")]
    pub layer_norm_eps: f64,
}

pub const DEFAULT_LAYER_NORM_EPS: f64 = 1e-12;

fn default_layer_norm_eps() -> f64 {
    DEFAULT_LAYER_NORM_EPS
}

/// Number of segment (token type) embeddings.
pub const NUM_SEGMENTS: usize = 2;

impl EncoderConfig {
    /// The published BERT-Base shape with a two-way classifier.
    pub fn bert_base(num_layers: usize) -> Self {
        EncoderConfig {
            vocab_size: 30522,
            max_seq_len: 512,
            hidden_dim: 768,
            num_layers,
            num_heads: 12,
            ffn_dim: 3072,
            num_classes: 2,
            dropout_prob: 0.0,
            layer_norm_eps: DEFAULT_LAYER_NORM_EPS,
        }
    }

    pub fn with_layers(&self, num_layers: usize) -> Self {
        EncoderConfig {
            num_layers,
            ..self.clone()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be at least 2, got {}", self.num_classes)));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!("dropout_prob must lie in [0, 1), got {}", self.dropout_prob)));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form parameter accounting, split the way efficiency tables
/// usually report it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamReport {
    pub emb_params: usize,
    pub trm_params: usize,
    pub pooler_params: usize,
    pub classifier_params: usize,
    pub total: usize,
}

/// Parameters of a single transformer layer.
pub fn layer_params(config: &EncoderConfig) -> usize {
    let d = config.hidden_dim;
    let f = config.ffn_dim;
    // q, k, v, o projections + intermediate + output + two norms
    4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
}

pub fn count_params(config: &EncoderConfig) -> ParamReport {
    let d = config.hidden_dim;
    let emb_params = (config.vocab_size + config.max_seq_len + NUM_SEGMENTS) * d + 2 * d;
    let trm_params = config.num_layers * layer_params(config);
    let pooler_params = d * d + d;
    let classifier_params = d * config.num_classes + config.num_classes;
    ParamReport {
        emb_params,
        trm_params,
        pooler_params,
        classifier_params,
        total: emb_params + trm_params + pooler_params + classifier_params,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bert_base_components() {
        let r = count_params(&EncoderConfig::bert_base(12));
        assert_eq!(r.emb_params, 23_837_184);
        assert_eq!(r.trm_params, 85_054_464);
        assert_eq!(r.pooler_params, 590_592);
    }

    #[test]
    fn transformer_count_is_linear_in_depth() {
        let base = EncoderConfig::bert_base(1);
        let one = count_params(&base).trm_params;
        for l in 1..=24 {
            assert_eq!(count_params(&base.with_layers(l)).trm_params, l * one);
        }
    }

    #[test]
    fn validation() {
        let mut c = EncoderConfig::bert_base(2);
        assert!(c.validate().is_ok());
        c.num_heads = 5;
        assert!(c.validate().is_err());
        c.num_heads = 12;
        c.num_classes = 1;
        assert!(c.validate().is_err());
        c.num_classes = 2;
        c.dropout_prob = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_defaults_fill_optional_fields() {
        let c: EncoderConfig = serde_json::from_str(
            r#"{"vocab_size":10,"max_seq_len":8,"hidden_dim":4,"num_layers":1,"num_heads":2,"ffn_dim":8,"num_classes":2}"#,
        )
        .unwrap();
        assert_eq!(c.dropout_prob, 0.0);
        assert_eq!(c.layer_norm_eps, 1e-12);
    }
}
