use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{EpochRecord, RunConfig, RunKind, RunRecord};
use super::{adam_step, evaluate, AdamState, OptimizerConfig};
use crate::data::{batch_indices, EncodedSplit};
use crate::distill::{
    build_layer_map, init_student_from_teacher, record_objective, DistillConfig, LayerMap, LossBreakdown,
    TeacherSignal,
};
use crate::encoder::{forward_with, EncoderConfig, EncoderModel, InputBatch};
use crate::error::{Error, Result};
use crate::tensor::{softmax_rows, Tape, Tensor};

/// Encoded train/dev splits plus an optional test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train: EncodedSplit,
    pub dev: EncodedSplit,
    pub test: Option<EncodedSplit>,
}

/// Teacher logits and [CLS] states for every training example, computed
/// once. Rows are evaluated independently, so the signal is bitwise the
/// same as running the teacher on each batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherCache {
    teacher_layers: usize,
    /// `[N, classes]`
    logits: Tensor,
    /// `[N, L_t, d]`
    cls_states: Tensor,
}

const EVAL_CHUNK: usize = 256;

impl TeacherCache {
    pub fn build(teacher: &EncoderModel, split: &EncodedSplit) -> Result<Self> {
        if split.is_empty() {
            return Err(Error::Input("cannot cache the teacher over an empty split".into()));
        }
        let (mut logits, mut cls) = (Vec::new(), Vec::new());
        let indices: Vec<usize> = (0..split.len()).collect();
        for chunk in indices.chunks(EVAL_CHUNK) {
            let (batch, _) = split.batch(chunk)?;
            let trace = teacher.forward(&batch)?;
            logits.extend_from_slice(trace.final_logits.data());
            cls.extend_from_slice(trace.cls_states.data());
        }
        let c = teacher.config();
        Ok(TeacherCache {
            teacher_layers: c.num_layers,
            logits: Tensor::new(vec![split.len(), c.num_classes], logits)?,
            cls_states: Tensor::new(vec![split.len(), c.num_layers, c.hidden_dim], cls)?,
        })
    }

    pub fn len(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn signal(&self, indices: &[usize], temperature: f64) -> Result<TeacherSignal> {
        let gather = |t: &Tensor| -> Result<Tensor> {
            let width = t.len() / t.shape()[0];
            let mut shape = t.shape().to_vec();
            shape[0] = indices.len();
            let mut data = Vec::with_capacity(indices.len() * width);
            for &i in indices {
                data.extend_from_slice(&t.data()[i * width..(i + 1) * width]);
            }
            Tensor::new(shape, data)
        };
        Ok(TeacherSignal {
            soft_labels: softmax_rows(&gather(&self.logits)?, temperature)?,
            cls_states: gather(&self.cls_states)?,
        })
    }
}

enum Teacher<'a> {
    Live(&'a EncoderModel),
    Cached(&'a TeacherCache),
}

impl Teacher<'_> {
    fn signal(&self, batch: &InputBatch, indices: &[usize], temperature: f64) -> Result<TeacherSignal> {
        match self {
            Teacher::Live(model) => {
                let trace = model.forward(batch)?;
                Ok(TeacherSignal {
                    soft_labels: softmax_rows(&trace.final_logits, temperature)?,
                    cls_states: trace.cls_states,
                })
            }
            Teacher::Cached(cache) => cache.signal(indices, temperature),
        }
    }
}

/// Trains a freshly built model (seeded by `opt.seed`) with plain
/// cross-entropy and returns the epoch with the best dev accuracy.
pub fn train_teacher(config: &EncoderConfig, opt: &OptimizerConfig, data: &TaskData) -> Result<(EncoderModel, RunRecord)> {
    opt.validate()?;
    let model = EncoderModel::build(config, opt.seed)?;
    let run = RunConfig {
        kind: RunKind::Teacher,
        model: config.clone(),
        optimizer: opt.clone(),
        distill: None,
        teacher_layers: None,
        layer_map: None,
        init_from_teacher: false,
    };
    train_loop(model, None, &DistillConfig::fine_tuning(), &empty_map(config.num_layers), run, data)
}

/// Cross-entropy training of an `n`-layer student: initialized from the
/// teacher's lower layers when a teacher is given, otherwise built from
/// `config` with `n` layers.
pub fn finetune_student(
    teacher: Option<&EncoderModel>,
    n: usize,
    config: &EncoderConfig,
    opt: &OptimizerConfig,
    data: &TaskData,
) -> Result<(EncoderModel, RunRecord)> {
    opt.validate()?;
    let model = match teacher {
        Some(t) => init_student_from_teacher(t, n)?,
        None => EncoderModel::build(&config.with_layers(n), opt.seed)?,
    };
    let run = RunConfig {
        kind: RunKind::Finetune,
        model: model.config().clone(),
        optimizer: opt.clone(),
        distill: None,
        teacher_layers: teacher.map(EncoderModel::num_layers),
        layer_map: None,
        init_from_teacher: teacher.is_some(),
    };
    let map = empty_map(model.num_layers());
    train_loop(model, None, &DistillConfig::fine_tuning(), &map, run, data)
}

/// Distills `teacher` into an `n`-layer student initialized from the
/// teacher's lower layers.
pub fn distill(
    teacher: &EncoderModel,
    n: usize,
    config: &DistillConfig,
    opt: &OptimizerConfig,
    data: &TaskData,
    cache: Option<&TeacherCache>,
) -> Result<(EncoderModel, RunRecord)> {
    config.validate()?;
    build_layer_map(teacher.num_layers(), n, config.strategy)?;
    let student = init_student_from_teacher(teacher, n)?;
    distill_student(teacher, student, true, config, opt, data, cache)
}

/// Distills into an already initialized student. The teacher is only
/// read; it takes no part in differentiation.
pub fn distill_student(
    teacher: &EncoderModel,
    student: EncoderModel,
    init_from_teacher: bool,
    config: &DistillConfig,
    opt: &OptimizerConfig,
    data: &TaskData,
    cache: Option<&TeacherCache>,
) -> Result<(EncoderModel, RunRecord)> {
    config.validate()?;
    opt.validate()?;
    let map = build_layer_map(teacher.num_layers(), student.num_layers(), config.strategy)?;
    let (s, t) = (student.config(), teacher.config());
    if !map.is_empty() && s.hidden_dim != t.hidden_dim {
        return Err(Error::HiddenSizeMismatch {
            student: s.hidden_dim,
            teacher: t.hidden_dim,
        });
    }
    if s.num_classes != t.num_classes {
        return Err(Error::Config(format!(
            "student predicts {} classes but the teacher {}",
            s.num_classes, t.num_classes
        )));
    }
    let source = match cache {
        Some(c) => {
            if c.len() != data.train.len() || c.teacher_layers != t.num_layers {
                return Err(Error::Contract("teacher cache was built for a different teacher or split".into()));
            }
            Teacher::Cached(c)
        }
        None => Teacher::Live(teacher),
    };
    let run = RunConfig {
        kind: RunKind::Distill,
        model: s.clone(),
        optimizer: opt.clone(),
        distill: Some(config.clone()),
        teacher_layers: Some(t.num_layers),
        layer_map: Some(map.entries().to_vec()),
        init_from_teacher,
    };
    train_loop(student, Some(source), config, &map, run, data)
}

fn empty_map(layers: usize) -> LayerMap {
    build_layer_map(layers, layers, crate::distill::DistillStrategy::None).expect("depth 1..=L is valid for none")
}

fn train_loop(
    mut model: EncoderModel,
    teacher: Option<Teacher<'_>>,
    config: &DistillConfig,
    map: &LayerMap,
    run: RunConfig,
    data: &TaskData,
) -> Result<(EncoderModel, RunRecord)> {
    let opt = run.optimizer.clone();
    if data.train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let started = Instant::now();
    let initial_dev_accuracy = evaluate(&model, &data.dev)?.accuracy;
    let mut state = AdamState::new(model.params());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(opt.seed);
    dropout_rng.set_stream(u64::MAX);
    let use_dropout = model.config().dropout_prob > 0.0;

    let mut best = (model.clone(), 0usize, initial_dev_accuracy);
    let mut epochs = Vec::with_capacity(opt.epochs);
    let mut step_losses = Vec::new();
    let n = data.train.len() as f64;

    for epoch in 1..=opt.epochs {
        let epoch_start = Instant::now();
        let mut sums = LossBreakdown::default();
        let mut correct = 0usize;
        let batches = batch_indices(data.train.len(), opt.batch_size, opt.seed, epoch as u64, true)?;
        for (step, indices) in batches.iter().enumerate() {
            let (batch, labels) = data.train.batch(indices)?;
            let signal = match &teacher {
                Some(t) => Some(t.signal(&batch, indices, config.temperature)?),
                None => None,
            };
            let mut tape = Tape::new();
            let rng = use_dropout.then_some(&mut dropout_rng as &mut dyn rand::RngCore);
            let out = forward_with(&model, &mut tape, &batch, rng)?;
            let b = indices.len() as f64;
            let (loss, parts) = record_objective(&mut tape, &out, &labels, signal.as_ref(), config, map, 1.0 / b)?;
            let step_loss = parts.total / b;
            if !step_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: step + 1,
                    loss: step_loss,
                });
            }
            step_losses.push(step_loss);
            correct += tape
                .value(out.logits)
                .argmax_rows()
                .iter()
                .zip(&labels)
                .filter(|(p, y)| p == y)
                .count();
            sums.l_ce += parts.l_ce;
            sums.l_ds += parts.l_ds;
            sums.l_pt += parts.l_pt;
            sums.total += parts.total;

            let mut grads = tape.backward(loss)?.into_params();
            let grads: Vec<Tensor> = model
                .params()
                .iter()
                .enumerate()
                .map(|(i, p)| grads.remove(&crate::tensor::ParamId(i)).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            drop(tape);
            adam_step(model.params_mut(), &grads, &mut state, &opt)?;
        }
        let dev_accuracy = evaluate(&model, &data.dev)?.accuracy;
        let record = EpochRecord {
            epoch,
            train: LossBreakdown {
                l_ce: sums.l_ce / n,
                l_ds: sums.l_ds / n,
                l_pt: sums.l_pt / n,
                total: sums.total / n,
            },
            train_accuracy: correct as f64 / n,
            dev_accuracy,
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        };
        log::info!(
            "{:?} epoch {epoch}: loss {:.6} (ce {:.6}, ds {:.6}, pt {:.6}) train acc {:.4} dev acc {:.4}",
            run.kind,
            record.train.total,
            record.train.l_ce,
            record.train.l_ds,
            record.train.l_pt,
            record.train_accuracy,
            dev_accuracy
        );
        if best.1 == 0 || dev_accuracy > best.2 {
            best = (model.clone(), epoch, dev_accuracy);
        }
        epochs.push(record);
    }

    let (model, selected_epoch, best_dev_accuracy) = best;
    let test_accuracy = match &data.test {
        Some(t) => Some(evaluate(&model, t)?.accuracy),
        None => None,
    };
    Ok((
        model,
        RunRecord {
            config: run,
            initial_dev_accuracy,
            epochs,
            step_losses,
            selected_epoch,
            best_dev_accuracy,
            test_accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}
