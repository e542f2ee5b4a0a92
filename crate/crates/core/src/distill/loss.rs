//! Distillation objectives. All losses are summed over the batch; callers
//! that want a per-example scale divide afterwards.

use serde::{Deserialize, Serialize};

use super::{DistillConfig, LayerMap};
use crate::encoder::{EncoderModel, EncoderOutput, InputBatch};
use crate::error::{Error, Result};
use crate::tensor::{log_softmax_rows, softmax_rows, Tape, Tensor, Var};

/// Components of the patient-distillation objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_ds: f64,
    pub l_pt: f64,
    pub total: f64,
}

/// Teacher class probabilities at `temperature`. The teacher is run
/// without recording, so nothing can flow back into it.
pub fn soft_labels(teacher: &EncoderModel, batch: &InputBatch, temperature: f64) -> Result<Tensor> {
    let trace = teacher.forward(batch)?;
    softmax_rows(&trace.final_logits, temperature)
}

fn check_rows(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Cross-entropy of the student's predictions against teacher probabilities:
/// `−Σ_i Σ_c p_t(c) · log p_s(c)`.
///
/// With `symmetric` the student logits are also divided by `temperature`
/// and the sum is multiplied by `temperature²`; otherwise the student
/// distribution is the plain softmax.
pub fn loss_ds(p_teacher: &Tensor, student_logits: &Tensor, temperature: f64, symmetric: bool) -> Result<f64> {
    check_rows("loss_ds", p_teacher, student_logits)?;
    let t_student = if symmetric { temperature } else { 1.0 };
    let log_ps = log_softmax_rows(student_logits, t_student)?;
    let ce = p_teacher
        .data()
        .iter()
        .zip(log_ps.data())
        .fold(0.0, |s, (&p, &lp)| if p == 0.0 { s } else { s - p * lp });
    Ok(if symmetric { temperature * temperature * ce } else { ce })
}

/// `−Σ_i log p_s(y_i)`.
pub fn loss_ce(labels: &[usize], student_logits: &Tensor) -> Result<f64> {
    let targets = one_hot(labels, student_logits.cols())?;
    check_rows("loss_ce", &targets, student_logits)?;
    let log_ps = log_softmax_rows(student_logits, 1.0)?;
    Ok(labels
        .iter()
        .enumerate()
        .fold(0.0, |s, (i, &y)| s - log_ps.row(i)[y]))
}

/// Row-wise entropy summed over rows, `−Σ p log p`.
pub fn entropy(p: &Tensor) -> f64 {
    p.data().iter().fold(0.0, |s, &v| if v > 0.0 { s - v * v.ln() } else { s })
}

/// `(1 − α)·l_ce + α·l_ds`
pub fn kd_loss(alpha: f64, l_ce: f64, l_ds: f64) -> f64 {
    (1.0 - alpha) * l_ce + alpha * l_ds
}

/// `(1 − α)·l_ce + α·l_ds + β·l_pt`, with the components echoed back.
pub fn pkd_loss(config: &DistillConfig, l_ce: f64, l_ds: f64, l_pt: f64) -> LossBreakdown {
    LossBreakdown {
        l_ce,
        l_ds,
        l_pt,
        total: kd_loss(config.alpha, l_ce, l_ds) + config.beta * l_pt,
    }
}

/// Patient loss between normalized [CLS] states:
/// `Σ_i Σ_j ‖ h^s_{i,j}/‖h^s_{i,j}‖ − h^t_{i,I(j)}/‖h^t_{i,I(j)}‖ ‖²`.
///
/// `student_cls` is `[batch, M, d]` with `M = map.student_layers()`;
/// `teacher_cls` is `[batch, L_t, d]`. Norms are floored at `eps_norm`.
pub fn loss_pt(student_cls: &Tensor, teacher_cls: &Tensor, map: &LayerMap, eps_norm: f64) -> Result<f64> {
    let (sb, sm, sd) = dims3(student_cls, "loss_pt student")?;
    let (tb, tl, td) = dims3(teacher_cls, "loss_pt teacher")?;
    if sd != td {
        return Err(Error::HiddenSizeMismatch {
            student: sd,
            teacher: td,
        });
    }
    if sm != map.student_layers() {
        return Err(Error::Contract(format!(
            "layer map covers {} student layers but {} were given",
            map.student_layers(),
            sm
        )));
    }
    if tl != map.teacher_layers() || sb != tb {
        return Err(Error::Contract(format!(
            "teacher states {:?} do not fit a {}-layer map over a batch of {}",
            teacher_cls.shape(),
            map.teacher_layers(),
            sb
        )));
    }
    let normalize = |v: &[f64]| -> Vec<f64> {
        let n = v.iter().fold(0.0, |s, &x| s + x * x).sqrt().max(eps_norm);
        v.iter().map(|&x| x / n).collect()
    };
    let mut total = 0.0;
    for i in 0..sb {
        for (j, &t_layer) in map.entries().iter().enumerate() {
            let hs = normalize(&student_cls.data()[(i * sm + j) * sd..][..sd]);
            let ht = normalize(&teacher_cls.data()[(i * tl + t_layer - 1) * td..][..td]);
            total += hs.iter().zip(&ht).fold(0.0, |s, (&a, &b)| s + (a - b) * (a - b));
        }
    }
    Ok(total)
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Dimension {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

pub(crate) fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::Input("no labels".into()));
    }
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Input(format!("label {y} is out of range for {classes} classes")));
        }
        data[i * classes + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

/// Frozen teacher outputs for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSignal {
    /// `[batch, classes]` probabilities at the distillation temperature.
    pub soft_labels: Tensor,
    /// `[batch, L_t, d]` teacher [CLS] states.
    pub cls_states: Tensor,
}

/// Records the objective for one batch on `tape` and returns the scalar to
/// differentiate (the objective times `scale`) together with the unscaled
/// batch-sum components.
///
/// Without a teacher this is plain cross-entropy.
pub fn record_objective(
    tape: &mut Tape,
    student: &EncoderOutput<Var>,
    labels: &[usize],
    teacher: Option<&TeacherSignal>,
    config: &DistillConfig,
    map: &LayerMap,
    scale: f64,
) -> Result<(Var, LossBreakdown)> {
    let logits = student.logits;
    let targets = one_hot(labels, tape.value(logits).cols())?;
    let ce = tape.softmax_cross_entropy(logits, &targets, 1.0, 1.0)?;
    let l_ce = tape.value(ce).item()?;
    let mut total = tape.scale(ce, 1.0 - config.alpha);
    let (mut l_ds, mut l_pt) = (0.0, 0.0);

    if let Some(teacher) = teacher {
        let ds = if config.symmetric_temperature {
            let t = config.temperature;
            tape.softmax_cross_entropy(logits, &teacher.soft_labels, t, t * t)?
        } else {
            tape.softmax_cross_entropy(logits, &teacher.soft_labels, 1.0, 1.0)?
        };
        l_ds = tape.value(ds).item()?;
        let weighted = tape.scale(ds, config.alpha);
        total = tape.add(total, weighted)?;

        if !map.is_empty() {
            let (tb, tl, td) = dims3(&teacher.cls_states, "teacher states")?;
            if tl != map.teacher_layers() {
                return Err(Error::Contract(format!(
                    "teacher has {tl} layers but the map expects {}",
                    map.teacher_layers()
                )));
            }
            if student.cls.len() < map.student_layers() {
                return Err(Error::Contract(format!(
                    "student has {} layers but the map covers {}",
                    student.cls.len(),
                    map.student_layers()
                )));
            }
            let mut pt: Option<Var> = None;
            for (j, &t_layer) in map.entries().iter().enumerate() {
                let s_var = student.cls[j];
                let sd = tape.value(s_var).cols();
                if sd != td {
                    return Err(Error::HiddenSizeMismatch {
                        student: sd,
                        teacher: td,
                    });
                }
                let mut rows = Vec::with_capacity(tb * td);
                for i in 0..tb {
                    rows.extend_from_slice(&teacher.cls_states.data()[(i * tl + t_layer - 1) * td..][..td]);
                }
                let target = Tensor::new(vec![tb, td], rows)?;
                let term = tape.normalized_mse(s_var, &target, config.eps_norm)?;
                pt = Some(match pt {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
            let pt = pt.expect("non-empty map");
            l_pt = tape.value(pt).item()?;
            let weighted = tape.scale(pt, config.beta);
            total = tape.add(total, weighted)?;
        }
    }

    let breakdown = LossBreakdown {
        l_ce,
        l_ds,
        l_pt,
        total: tape.value(total).item()?,
    };
    let scaled = tape.scale(total, scale);
    Ok((scaled, breakdown))
}
