use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DistillStrategy;
use crate::error::{Error, Result};

/// Weights and temperature of the distillation objective
/// `(1 − α)·L_CE + α·L_DS + β·L_PT`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
    pub strategy: DistillStrategy,
    /// Divide the student logits by the temperature as well and scale the
    /// distillation term by T². Off by default: the student term then uses
    /// plain probabilities.
    #[serde(default)]
    pub symmetric_temperature: bool,
    #[serde(default = "default_eps_norm")]
    pub eps_norm: f64,
}

pub const DEFAULT_EPS_NORM: f64 = 1e-12;

fn default_eps_norm() -> f64 {
    DEFAULT_EPS_NORM
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 0.5,
            beta: 0.0,
            temperature: 5.0,
            strategy: DistillStrategy::None,
            symmetric_temperature: false,
            eps_norm: DEFAULT_EPS_NORM,
        }
    }
}

impl DistillConfig {
    /// Plain fine-tuning expressed as a distillation config (α = β = 0).
    pub fn fine_tuning() -> Self {
        DistillConfig {
            alpha: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.eps_norm > 0.0) {
            return Err(Error::Config(format!("eps_norm must be positive, got {}", self.eps_norm)));
        }
        if self.strategy == DistillStrategy::None && self.beta > 0.0 {
            return Err(Error::Config("strategy none has no intermediate layers; beta must be 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
