//! The optional `--config` JSON file and its merge with command-line flags.
//! Every section and key is optional; flags win over the file, and the file
//! wins over built-in defaults.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use pkd_core::distill::{DistillConfig, DistillStrategy};
use pkd_core::encoder::EncoderConfig;
use pkd_core::train::OptimizerConfig;
use serde::Deserialize;

use crate::{DistillFlags, OptimArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub distill: DistillSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub vocab_size: Option<usize>,
    pub max_seq_len: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub dropout_prob: Option<f64>,
    pub layer_norm_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub temperature: Option<f64>,
    pub strategy: Option<DistillStrategy>,
    pub symmetric_temperature: Option<bool>,
    pub eps_norm: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Small encoder used when neither the file nor a flag gives a dimension.
pub fn model_config(
    section: &ModelSection,
    vocab_size: usize,
    num_classes: usize,
    max_seq_len: usize,
    num_layers: Option<usize>,
) -> EncoderConfig {
    EncoderConfig {
        vocab_size: section.vocab_size.unwrap_or(vocab_size).max(vocab_size),
        max_seq_len: section.max_seq_len.unwrap_or(max_seq_len),
        hidden_dim: section.hidden_dim.unwrap_or(32),
        num_layers: num_layers.or(section.num_layers).unwrap_or(4),
        num_heads: section.num_heads.unwrap_or(4),
        ffn_dim: section.ffn_dim.unwrap_or(64),
        num_classes,
        dropout_prob: section.dropout_prob.unwrap_or(0.0),
        layer_norm_eps: section.layer_norm_eps.unwrap_or(pkd_core::encoder::DEFAULT_LAYER_NORM_EPS),
    }
}

pub fn optimizer_config(section: &OptimizerSection, flags: &OptimArgs) -> OptimizerConfig {
    let d = OptimizerConfig::default();
    OptimizerConfig {
        learning_rate: flags.lr.or(section.learning_rate).unwrap_or(d.learning_rate),
        beta1: section.beta1.unwrap_or(d.beta1),
        beta2: section.beta2.unwrap_or(d.beta2),
        adam_eps: section.adam_eps.unwrap_or(d.adam_eps),
        batch_size: flags.batch.or(section.batch_size).unwrap_or(d.batch_size),
        epochs: flags.epochs.or(section.epochs).unwrap_or(d.epochs),
        seed: flags.seed.or(section.seed).unwrap_or(d.seed),
        grad_clip: flags.grad_clip.or(section.grad_clip),
    }
}

pub fn distill_config(section: &DistillSection, flags: &DistillFlags) -> DistillConfig {
    let d = DistillConfig::default();
    let strategy = flags.strategy.or(section.strategy).unwrap_or(d.strategy);
    let default_beta = if strategy == DistillStrategy::None { 0.0 } else { 100.0 };
    DistillConfig {
        alpha: flags.alpha.or(section.alpha).unwrap_or(d.alpha),
        beta: flags.beta.or(section.beta).unwrap_or(default_beta),
        temperature: flags.temp.or(section.temperature).unwrap_or(d.temperature),
        strategy,
        symmetric_temperature: flags.symmetric_temp || section.symmetric_temperature.unwrap_or(false),
        eps_norm: section.eps_norm.unwrap_or(d.eps_norm),
    }
}
