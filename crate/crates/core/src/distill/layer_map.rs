use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which teacher layers a student imitates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillStrategy {
    /// Every `L_t / n`-th teacher layer.
    Skip,
    /// The teacher layers just below its last one.
    Last,
    /// Output-only distillation; no intermediate layers.
    None,
}

impl fmt::Display for DistillStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistillStrategy::Skip => "skip",
            DistillStrategy::Last => "last",
            DistillStrategy::None => "none",
        })
    }
}

impl FromStr for DistillStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(DistillStrategy::Skip),
            "last" => Ok(DistillStrategy::Last),
            "none" => Ok(DistillStrategy::None),
            other => Err(Error::Input(format!("unknown strategy {other:?} (expected skip, last or none)"))),
        }
    }
}

/// Student layer `j` (1-based) learns from teacher layer `entries[j - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMap {
    entries: Vec<usize>,
    teacher_layers: usize,
}

impl LayerMap {
    /// 1-based teacher layer indices, strictly increasing.
    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// Number of student layers that take part in the patient loss.
    pub fn student_layers(&self) -> usize {
        self.entries.len()
    }

    pub fn teacher_layers(&self) -> usize {
        self.teacher_layers
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds the intermediate-layer map for a `teacher`-deep teacher and an
/// `student`-deep student.
///
/// The teacher's top layer is never mapped: its output already reaches the
/// student through the soft labels. A student of depth n therefore matches
/// n − 1 teacher layers.
pub fn build_layer_map(teacher: usize, student: usize, strategy: DistillStrategy) -> Result<LayerMap> {
    let min_student = if strategy == DistillStrategy::None { 1 } else { 2 };
    if student < min_student || student > teacher {
        return Err(Error::Depth { teacher, student });
    }
    let entries = match strategy {
        DistillStrategy::None => Vec::new(),
        DistillStrategy::Skip => {
            if teacher % student != 0 {
                return Err(Error::Divisibility { teacher, student });
            }
            let stride = teacher / student;
            (1..student).map(|j| j * stride).collect()
        }
        DistillStrategy::Last => (teacher - student + 1..teacher).collect(),
    };
    Ok(LayerMap {
        entries,
        teacher_layers: teacher,
    })
}
