//! Parameter accounting and inference timing across encoder depths, plus
//! learning-curve export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CLS_ID, SEP_ID};
use crate::encoder::{count_params, EncoderConfig, EncoderModel, InputBatch};
use crate::error::{Error, Result};
use crate::train::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub num_layers: usize,
    pub emb_params: usize,
    pub trm_params: usize,
    pub total_params: usize,
    /// Median wall-clock seconds of one forward pass over the batch.
    pub inference_seconds: f64,
    /// Deepest model's time divided by this row's.
    pub speedup_vs_deepest: f64,
    /// Deepest model's parameter count divided by this row's.
    pub param_ratio_vs_deepest: f64,
}

/// Rows sorted by depth, deepest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub batch_size: usize,
    pub seq_len: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl BenchReport {
    /// Builds rows from per-depth parameter reports and timings.
    pub fn from_measurements(template: &EncoderConfig, timings: &[(usize, f64)]) -> Result<Self> {
        if timings.is_empty() {
            return Err(Error::Input("no depths to report".into()));
        }
        let mut rows: Vec<BenchRow> = timings
            .iter()
            .map(|&(depth, secs)| {
                let p = count_params(&template.with_layers(depth));
                BenchRow {
                    num_layers: depth,
                    emb_params: p.emb_params,
                    trm_params: p.trm_params,
                    total_params: p.total,
                    inference_seconds: secs,
                    speedup_vs_deepest: 1.0,
                    param_ratio_vs_deepest: 1.0,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.num_layers.cmp(&a.num_layers));
        let (t0, p0) = (rows[0].inference_seconds, rows[0].total_params as f64);
        for r in rows.iter_mut().skip(1) {
            r.speedup_vs_deepest = t0 / r.inference_seconds;
            r.param_ratio_vs_deepest = p0 / r.total_params as f64;
        }
        Ok(BenchReport { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "num_layers,emb_params,trm_params,total_params,inference_seconds,speedup_vs_deepest,param_ratio_vs_deepest\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.num_layers,
                r.emb_params,
                r.trm_params,
                r.total_params,
                r.inference_seconds,
                r.speedup_vs_deepest,
                r.param_ratio_vs_deepest
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A batch of random in-vocabulary sequences framed by `[CLS]`/`[SEP]`,
/// without padding.
pub fn synthetic_batch(config: &EncoderConfig, batch_size: usize, seq_len: usize, seed: u64) -> Result<InputBatch> {
    if seq_len < 2 || seq_len > config.max_seq_len {
        return Err(Error::Input(format!(
            "benchmark sequence length {seq_len} must lie in [2, {}]",
            config.max_seq_len
        )));
    }
    if config.vocab_size <= SEP_ID + 1 {
        return Err(Error::Input("vocabulary has no content tokens".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = Vec::with_capacity(batch_size * seq_len);
    for _ in 0..batch_size {
        tokens.push(CLS_ID);
        for _ in 1..seq_len - 1 {
            tokens.push(rng.random_range(SEP_ID + 1..config.vocab_size));
        }
        tokens.push(SEP_ID);
    }
    let n = batch_size * seq_len;
    InputBatch::new(batch_size, seq_len, tokens, vec![0; n], vec![true; n])
}

/// Times single-threaded inference for one model per depth, all sharing
/// `template`'s width. Each depth gets one discarded warmup pass and then
/// `repeats` timed passes over the same batch; the median is reported.
pub fn bench_inference(template: &EncoderConfig, depths: &[usize], spec: &BenchSpec) -> Result<BenchReport> {
    if depths.is_empty() {
        return Err(Error::Input("no depths given".into()));
    }
    if spec.repeats < 3 {
        return Err(Error::Input(format!("repeats must be at least 3, got {}", spec.repeats)));
    }
    let batch = synthetic_batch(template, spec.batch_size, spec.seq_len, spec.seed)?;
    let mut timings = Vec::with_capacity(depths.len());
    for &depth in depths {
        let model = EncoderModel::build(&template.with_layers(depth), spec.seed)?;
        model.forward(&batch)?;
        let mut times: Vec<f64> = (0..spec.repeats)
            .map(|_| {
                let t = Instant::now();
                let out = model.forward(&batch);
                let secs = t.elapsed().as_secs_f64();
                out.map(|_| secs)
            })
            .collect::<Result<_>>()?;
        times.sort_by(f64::total_cmp);
        let median = median_sorted(&times);
        log::info!("depth {depth}: median {median:.4}s over {} repeats", spec.repeats);
        timings.push((depth, median));
    }
    BenchReport::from_measurements(template, &timings)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Long-format learning curves: one `(run_id, epoch, split, accuracy)` row
/// per run, epoch and split (`train` and `dev`).
pub fn curves_csv(runs: &[(String, RunRecord)]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Input("no run records given".into()));
    }
    let mut out = String::from("run_id,epoch,split,accuracy\n");
    for (id, r) in runs {
        for e in &r.epochs {
            writeln!(out, "{id},{},train,{}", e.epoch, e.train_accuracy).unwrap();
            writeln!(out, "{id},{},dev,{}", e.epoch, e.dev_accuracy).unwrap();
        }
    }
    Ok(out)
}

pub fn emit_curves(runs: &[(String, RunRecord)], out_path: &Path) -> Result<()> {
    let csv = curves_csv(runs)?;
    fs::write(out_path, csv).map_err(|e| Error::io(out_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::RunRecord;

    #[test]
    fn bert_base_param_ratios() {
        let t = EncoderConfig::bert_base(12);
        let r = BenchReport::from_measurements(&t, &[(3, 0.25), (12, 1.0), (6, 0.5)]).unwrap();
        let depths: Vec<usize> = r.rows.iter().map(|r| r.num_layers).collect();
        assert_eq!(depths, vec![12, 6, 3]);
        assert_eq!(r.rows[0].speedup_vs_deepest, 1.0);
        assert_eq!(format!("{:.2}", r.rows[1].param_ratio_vs_deepest), "1.64");
        assert_eq!(format!("{:.2}", r.rows[2].param_ratio_vs_deepest), "2.40");
        assert_eq!(r.rows[2].speedup_vs_deepest, 4.0);
    }

    #[test]
    fn single_depth_has_unit_speedup() {
        let t = EncoderConfig::bert_base(1);
        let r = BenchReport::from_measurements(&t, &[(4, 0.3)]).unwrap();
        assert_eq!(r.rows[0].speedup_vs_deepest, 1.0);
        assert_eq!(r.rows[0].param_ratio_vs_deepest, 1.0);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median_sorted(&[1.0, 2.0, 9.0]), 2.0);
        assert_eq!(median_sorted(&[1.0, 2.0, 4.0, 9.0]), 3.0);
    }

    #[test]
    fn curves_row_count() {
        let mut r: RunRecord = serde_json::from_str(SAMPLE).unwrap();
        r.epochs.truncate(1);
        let csv = curves_csv(&[("a".into(), r.clone()), ("b".into(), r)]).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(curves_csv(&[]).is_err());
    }

    const SAMPLE: &str = r#"{
      "config": {"kind": "teacher",
        "model": {"vocab_size": 10, "max_seq_len": 4, "hidden_dim": 4, "num_layers": 1,
                  "num_heads": 1, "ffn_dim": 4, "num_classes": 2},
        "optimizer": {"learning_rate": 0.001, "batch_size": 2, "epochs": 1, "seed": 0},
        "distill": null, "teacher_layers": null, "layer_map": null, "init_from_teacher": false},
      "initial_dev_accuracy": 0.5,
      "epochs": [{"epoch": 1, "train": {"l_ce": 0.7, "l_ds": 0.0, "l_pt": 0.0, "total": 0.7},
                  "train_accuracy": 0.5, "dev_accuracy": 0.75, "wall_seconds": 0.1}],
      "step_losses": [0.7],
      "selected_epoch": 1,
      "best_dev_accuracy": 0.75,
      "test_accuracy": null,
      "wall_seconds": 0.1
    }"#;
}
