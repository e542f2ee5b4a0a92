use serde::{Deserialize, Serialize};

use crate::data::EncodedSplit;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

/// Per-class tallies of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    /// Examples whose gold label is this class.
    pub support: usize,
    /// Examples predicted as this class.
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class: Vec<ClassCounts>,
}

const CHUNK: usize = 256;

/// Argmax class for every example of `split`, in split order.
pub fn predict(model: &EncoderModel, split: &EncodedSplit) -> Result<Vec<usize>> {
    let indices: Vec<usize> = (0..split.len()).collect();
    let mut out = Vec::with_capacity(split.len());
    for chunk in indices.chunks(CHUNK) {
        let (batch, _) = split.batch(chunk)?;
        out.extend(model.forward(&batch)?.final_logits.argmax_rows());
    }
    Ok(out)
}

/// Accuracy of argmax predictions against the split's labels.
pub fn evaluate(model: &EncoderModel, split: &EncodedSplit) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty split".into()));
    }
    let classes = model.config().num_classes;
    if let Some(&y) = split.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!("label {y} is out of range for {classes} classes")));
    }
    Ok(score(&predict(model, split)?, &split.labels, classes))
}

/// Tallies `predictions` against `labels`.
pub fn score(predictions: &[usize], labels: &[usize], classes: usize) -> Evaluation {
    let mut per_class = vec![ClassCounts::default(); classes];
    let mut correct = 0;
    for (&p, &y) in predictions.iter().zip(labels) {
        per_class[y].support += 1;
        per_class[p].predicted += 1;
        if p == y {
            per_class[y].correct += 1;
            correct += 1;
        }
    }
    Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        correct,
        total: labels.len(),
        per_class,
    }
}

/// Fraction of positions where two prediction lists agree.
pub fn agreement(a: &[usize], b: &[usize]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len().max(1) as f64
}
