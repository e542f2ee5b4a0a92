use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use super::{distill, OptimizerConfig, TaskData, TeacherCache};
use crate::distill::DistillConfig;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

/// Hyperparameter values to sweep; every combination is one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub temperatures: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, set) in [
            ("temperatures", &self.temperatures),
            ("alphas", &self.alphas),
            ("betas", &self.betas),
            ("learning_rates", &self.learning_rates),
        ] {
            if set.is_empty() {
                return Err(Error::Config(format!("grid has no {name}")));
            }
        }
        Ok(())
    }

    /// All points, temperature outermost and learning rate innermost.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &temperature in &self.temperatures {
            for &alpha in &self.alphas {
                for &beta in &self.betas {
                    for &learning_rate in &self.learning_rates {
                        out.push(GridPoint {
                            temperature,
                            alpha,
                            beta,
                            learning_rate,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
}

/// Settings shared by every run of a sweep.
pub struct GridTemplate<'a> {
    pub teacher: &'a EncoderModel,
    pub student_layers: usize,
    /// Strategy, symmetric flag and norm floor; α, β and T come from the grid.
    pub distill: DistillConfig,
    /// Learning rate comes from the grid.
    pub optimizer: OptimizerConfig,
    pub data: &'a TaskData,
    pub cache: Option<&'a TeacherCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Position of the point in enumeration order.
    pub index: usize,
    pub point: GridPoint,
    pub outcome: std::result::Result<RunRecord, String>,
}

impl GridResult {
    pub fn best_dev_accuracy(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.best_dev_accuracy)
    }
}

/// Runs every grid point and ranks them by best dev accuracy, ties going
/// to lower β, then lower T, then lower learning rate, then enumeration
/// order. Failed runs are kept, ranked last, with their error message.
pub fn grid_search(grid: &GridSpec, template: &GridTemplate<'_>) -> Result<Vec<GridResult>> {
    grid.validate()?;
    let mut results: Vec<GridResult> = grid
        .points()
        .into_iter()
        .enumerate()
        .map(|(index, point)| {
            let cfg = DistillConfig {
                alpha: point.alpha,
                beta: point.beta,
                temperature: point.temperature,
                ..template.distill.clone()
            };
            let opt = OptimizerConfig {
                learning_rate: point.learning_rate,
                ..template.optimizer.clone()
            };
            let outcome = distill(template.teacher, template.student_layers, &cfg, &opt, template.data, template.cache)
                .map(|(_, record)| record)
                .map_err(|e| e.to_string());
            match &outcome {
                Ok(r) => log::info!("grid point {index} {point:?}: best dev {:.4}", r.best_dev_accuracy),
                Err(e) => log::warn!("grid point {index} {point:?} failed: {e}"),
            }
            GridResult { index, point, outcome }
        })
        .collect();
    results.sort_by(rank);
    Ok(results)
}

fn rank(a: &GridResult, b: &GridResult) -> Ordering {
    let by_acc = match (a.best_dev_accuracy(), b.best_dev_accuracy()) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_acc
        .then(a.point.beta.total_cmp(&b.point.beta))
        .then(a.point.temperature.total_cmp(&b.point.temperature))
        .then(a.point.learning_rate.total_cmp(&b.point.learning_rate))
        .then(a.index.cmp(&b.index))
}

/// `grid.csv` contents, one row per point in rank order.
pub fn grid_csv(results: &[GridResult]) -> String {
    let mut out = String::from(
        "rank,index,temperature,alpha,beta,learning_rate,best_dev_accuracy,selected_epoch,test_accuracy,error\n",
    );
    for (rank, r) in results.iter().enumerate() {
        let p = &r.point;
        write!(
            out,
            "{},{},{},{},{},{},",
            rank + 1,
            r.index,
            p.temperature,
            p.alpha,
            p.beta,
            p.learning_rate
        )
        .unwrap();
        match &r.outcome {
            Ok(rec) => {
                let test = rec.test_accuracy.map(|t| t.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},", rec.best_dev_accuracy, rec.selected_epoch, test).unwrap();
            }
            Err(e) => {
                writeln!(out, ",,,\"{}\"", e.replace('"', "\"\"")).unwrap();
            }
        }
    }
    out
}

pub fn write_grid_csv(path: &Path, results: &[GridResult]) -> Result<()> {
    fs::write(path, grid_csv(results)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::record::tests::sample;

    fn result(index: usize, acc: Option<f64>, beta: f64, t: f64, lr: f64) -> GridResult {
        let outcome = match acc {
            Some(a) => {
                let mut r = sample(1);
                r.best_dev_accuracy = a;
                Ok(r)
            }
            None => Err("boom".to_string()),
        };
        GridResult {
            index,
            point: GridPoint {
                temperature: t,
                alpha: 0.5,
                beta,
                learning_rate: lr,
            },
            outcome,
        }
    }

    #[test]
    fn kd_grid_has_27_points() {
        let g = GridSpec {
            temperatures: vec![5.0, 10.0, 20.0],
            alphas: vec![0.2, 0.5, 0.7],
            betas: vec![0.0],
            learning_rates: vec![1e-5, 2e-5, 5e-5],
        };
        assert_eq!(g.points().len(), 27);
    }

    #[test]
    fn ranking_tie_breaks() {
        let mut v = vec![
            result(0, Some(0.8), 100.0, 5.0, 1e-3),
            result(1, None, 0.0, 5.0, 1e-3),
            result(2, Some(0.9), 10.0, 5.0, 1e-3),
            result(3, Some(0.8), 10.0, 10.0, 1e-3),
            result(4, Some(0.8), 10.0, 5.0, 2e-3),
            result(5, Some(0.8), 10.0, 5.0, 1e-3),
            result(6, Some(0.8), 10.0, 5.0, 1e-3),
        ];
        v.sort_by(rank);
        let order: Vec<usize> = v.iter().map(|r| r.index).collect();
        assert_eq!(order, vec![2, 5, 6, 4, 3, 0, 1]);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let g = GridSpec {
            temperatures: vec![],
            alphas: vec![0.5],
            betas: vec![0.0],
            learning_rates: vec![1e-3],
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn csv_has_a_row_per_point() {
        let v = vec![result(0, Some(0.8), 0.0, 5.0, 1e-3), result(1, None, 0.0, 5.0, 1e-3)];
        let csv = grid_csv(&v);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().ends_with("\"boom\""));
    }
}
