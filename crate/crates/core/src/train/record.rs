use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OptimizerConfig;
use crate::distill::{DistillConfig, LossBreakdown};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Teacher,
    Finetune,
    Distill,
}

/// Everything needed to repeat a run, echoed into `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kind: RunKind,
    pub model: EncoderConfig,
    pub optimizer: OptimizerConfig,
    pub distill: Option<DistillConfig>,
    pub teacher_layers: Option<usize>,
    pub layer_map: Option<Vec<usize>>,
    /// Whether the student started from the teacher's lower layers.
    pub init_from_teacher: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Loss components summed over the epoch and divided by the number of
    /// training examples.
    pub train: LossBreakdown,
    /// Accuracy of the training-time predictions, made while the epoch's
    /// updates were being applied.
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    /// Dev accuracy of the model before the first update.
    pub initial_dev_accuracy: f64,
    pub epochs: Vec<EpochRecord>,
    /// Batch-mean objective of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Epoch whose parameters were returned; 0 when no epoch ran.
    pub selected_epoch: usize,
    pub best_dev_accuracy: f64,
    /// Accuracy of the selected model on the test split, if one was given.
    pub test_accuracy: Option<f64>,
    pub wall_seconds: f64,
}

impl RunRecord {
    /// Equality of everything except wall-clock fields.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| {
            let mut r = r.clone();
            r.wall_seconds = 0.0;
            for e in &mut r.epochs {
                e.wall_seconds = 0.0;
            }
            r
        };
        strip(self) == strip(other)
    }

    /// `metrics.csv` contents: one `train` and one `dev` row per epoch, an
    /// epoch-0 `dev` row for the initial model, and a `test` row for the
    /// selected epoch when available. Loss columns are empty on
    /// evaluation rows. Wall-clock time is left out so identical runs
    /// produce identical files.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,split,accuracy,l_ce,l_ds,l_pt,total\n");
        let w = &mut out;
        writeln!(w, "0,dev,{},,,,", self.initial_dev_accuracy).unwrap();
        for e in &self.epochs {
            let t = &e.train;
            writeln!(
                w,
                "{},train,{},{},{},{},{}",
                e.epoch, e.train_accuracy, t.l_ce, t.l_ds, t.l_pt, t.total
            )
            .unwrap();
            writeln!(w, "{},dev,{},,,,", e.epoch, e.dev_accuracy).unwrap();
        }
        if let Some(acc) = self.test_accuracy {
            writeln!(w, "{},test,{},,,,", self.selected_epoch, acc).unwrap();
        }
        out
    }

    /// Writes `metrics.csv` and `run.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metrics = dir.join("metrics.csv");
        fs::write(&metrics, self.metrics_csv()).map_err(|e| Error::io(&metrics, e))?;
        let run = dir.join("run.json");
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(&run, e))?;
        fs::write(&run, json).map_err(|e| Error::io(&run, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}
