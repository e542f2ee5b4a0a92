#![allow(dead_code)]

use pkd_core::data::{synthetic_generate, EncodedSplit, SyntheticTaskSpec, TaskKind};
use pkd_core::distill::{record_objective, soft_labels, DistillConfig, LayerMap, LossBreakdown, TeacherSignal};
use pkd_core::encoder::{forward_with, EncoderConfig, EncoderModel, InputBatch};
use pkd_core::tensor::{ParamId, Tape, Tensor};
use pkd_core::train::TaskData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_config(layers: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size: 20,
        max_seq_len: 8,
        hidden_dim: 8,
        num_layers: layers,
        num_heads: 2,
        ffn_dim: 16,
        num_classes: 2,
        dropout_prob: 0.0,
        layer_norm_eps: 1e-12,
    }
}

/// Random batch with `[CLS]` (id 2) first and a random number of padded
/// tail positions per sequence.
pub fn random_batch(config: &EncoderConfig, batch: usize, seq: usize, seed: u64) -> InputBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tok = Vec::new();
    let mut seg = Vec::new();
    let mut mask = Vec::new();
    for _ in 0..batch {
        let valid = rng.random_range(2..=seq);
        let split = rng.random_range(1..=valid);
        for p in 0..seq {
            tok.push(if p == 0 { 2 } else if p < valid { rng.random_range(4..config.vocab_size) } else { 0 });
            seg.push(usize::from(p >= split && p < valid));
            mask.push(p < valid);
        }
    }
    InputBatch::new(batch, seq, tok, seg, mask).unwrap()
}

pub fn random_labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Teacher soft labels and [CLS] states for a batch.
pub fn teacher_signal(teacher: &EncoderModel, batch: &InputBatch, temperature: f64) -> TeacherSignal {
    TeacherSignal {
        soft_labels: soft_labels(teacher, batch, temperature).unwrap(),
        cls_states: teacher.forward(batch).unwrap().cls_states,
    }
}

/// Value, breakdown and per-parameter gradient of the batch-mean objective
/// (the quantity the trainer differentiates) for a student with
/// parameters `params`.
pub fn objective(
    config: &EncoderConfig,
    params: &[Tensor],
    batch: &InputBatch,
    labels: &[usize],
    signal: Option<&TeacherSignal>,
    dcfg: &DistillConfig,
    map: &LayerMap,
) -> (f64, LossBreakdown, Vec<Tensor>) {
    let model = EncoderModel::from_params(config.clone(), params.to_vec()).unwrap();
    let mut tape = Tape::new();
    let out = forward_with(&model, &mut tape, batch, None).unwrap();
    let (loss, parts) = record_objective(&mut tape, &out, labels, signal, dcfg, map, 1.0 / labels.len() as f64).unwrap();
    let value = tape.value(loss).item().unwrap();
    let grads = tape.backward(loss).unwrap();
    let g = params
        .iter()
        .enumerate()
        .map(|(i, p)| grads.param(ParamId(i)).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    (value, parts, g)
}

pub fn task_data(kind: TaskKind, vocab: usize, seq_len: usize, samples: usize, seed: u64) -> (TaskData, usize, usize) {
    let spec = SyntheticTaskSpec {
        kind,
        vocab_size: vocab,
        seq_len,
        num_samples: samples,
        seed,
    };
    let splits = synthetic_generate(&spec).unwrap();
    let v = spec.vocabulary();
    let len = spec.encoded_len();
    let data = TaskData {
        train: EncodedSplit::new(&v, &splits.train, len).unwrap(),
        dev: EncodedSplit::new(&v, &splits.dev, len).unwrap(),
        test: Some(EncodedSplit::new(&v, &splits.test, len).unwrap()),
    };
    (data, v.len(), len)
}
