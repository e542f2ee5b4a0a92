mod common;

use common::task_data;
use pkd_core::data::{EncodedSplit, Example, TaskKind, Vocabulary};
use pkd_core::distill::{entropy, init_student_from_teacher, loss_ds, DistillConfig, DistillStrategy};
use pkd_core::encoder::{EncoderConfig, EncoderModel};
use pkd_core::tensor::softmax_rows;
use pkd_core::train::{
    distill, evaluate, finetune_student, grid_search, train_teacher, GridSpec, GridTemplate, OptimizerConfig,
    TaskData, TeacherCache,
};
use pkd_core::Error;

fn model_config(vocab: usize, seq: usize, layers: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab,
        max_seq_len: seq,
        hidden_dim: 16,
        num_layers: layers,
        num_heads: 2,
        ffn_dim: 32,
        num_classes: 2,
        dropout_prob: 0.0,
        layer_norm_eps: 1e-12,
    }
}

fn opt(lr: f64, epochs: usize, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        learning_rate: lr,
        batch_size: 16,
        epochs,
        seed,
        ..Default::default()
    }
}

fn small_task() -> (TaskData, EncoderConfig) {
    let (data, vocab, len) = task_data(TaskKind::Majority, 6, 5, 400, 2);
    (data, model_config(vocab, len, 4))
}

#[test]
fn separable_toy_data_is_learned_by_one_layer() {
    // class 0 uses only even tokens, class 1 only odd ones
    let vocab = Vocabulary::from_tokens(["0", "1", "2", "3", "4", "5"]);
    let mut examples = Vec::new();
    for i in 0..240usize {
        let label = i % 2;
        let toks: Vec<String> = (0..4).map(|j| ((i / 2 + j * 7) % 3 * 2 + label).to_string()).collect();
        examples.push(Example {
            segment_a: toks,
            segment_b: None,
            label,
        });
    }
    let split = EncodedSplit::new(&vocab, &examples, 6).unwrap();
    let data = TaskData {
        train: split.clone(),
        dev: split.clone(),
        test: None,
    };
    let cfg = model_config(vocab.len(), 6, 1);
    let (model, record) = train_teacher(&cfg, &opt(1e-2, 4, 0), &data).unwrap();
    assert!(evaluate(&model, &split).unwrap().accuracy >= 0.99, "{:?}", record.epochs);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (data, cfg) = small_task();
    let (model, record) = train_teacher(&cfg, &opt(0.0, 2, 3), &data).unwrap();
    assert_eq!(model, EncoderModel::build(&cfg, 3).unwrap());
    for e in &record.epochs {
        assert_eq!(e.dev_accuracy, record.initial_dev_accuracy);
    }
}

#[test]
fn runs_are_deterministic() {
    let (data, cfg) = small_task();
    let (m1, r1) = train_teacher(&cfg, &opt(3e-3, 2, 5), &data).unwrap();
    let (m2, r2) = train_teacher(&cfg, &opt(3e-3, 2, 5), &data).unwrap();
    assert_eq!(m1, m2);
    assert!(r1.same_outcome(&r2));
    assert_eq!(r1.metrics_csv(), r2.metrics_csv());
}

#[test]
fn best_dev_epoch_is_returned() {
    let (data, cfg) = small_task();
    let (model, record) = train_teacher(&cfg, &opt(1e-2, 4, 1), &data).unwrap();
    let max = record.epochs.iter().map(|e| e.dev_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(record.best_dev_accuracy, max);
    assert_eq!(record.epochs[record.selected_epoch - 1].dev_accuracy, max);
    assert_eq!(evaluate(&model, &data.dev).unwrap().accuracy, max);
    assert_eq!(record.epochs.len(), 4);
    assert!(record.epochs.iter().enumerate().all(|(i, e)| e.epoch == i + 1));
    let steps_per_epoch = data.train.len().div_ceil(16);
    assert_eq!(record.step_losses.len(), 4 * steps_per_epoch);
}

fn teacher(data: &TaskData, cfg: &EncoderConfig) -> EncoderModel {
    train_teacher(cfg, &opt(1e-2, 1, 11), data).unwrap().0
}

#[test]
fn zero_alpha_zero_beta_distillation_is_fine_tuning() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let (_, ft) = finetune_student(Some(&t), 2, &cfg, &opt(3e-3, 2, 4), &data).unwrap();
    let dcfg = DistillConfig {
        alpha: 0.0,
        beta: 0.0,
        temperature: 5.0,
        strategy: DistillStrategy::Skip,
        ..Default::default()
    };
    let (_, kd) = distill(&t, 2, &dcfg, &opt(3e-3, 2, 4), &data, None).unwrap();
    assert_eq!(ft.step_losses, kd.step_losses);
}

#[test]
fn zero_beta_pkd_is_vanilla_kd() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let kd_cfg = DistillConfig {
        alpha: 0.5,
        beta: 0.0,
        temperature: 5.0,
        strategy: DistillStrategy::None,
        ..Default::default()
    };
    let pkd_cfg = DistillConfig {
        strategy: DistillStrategy::Skip,
        ..kd_cfg.clone()
    };
    let (m1, kd) = distill(&t, 2, &kd_cfg, &opt(3e-3, 2, 4), &data, None).unwrap();
    let (m2, pkd) = distill(&t, 2, &pkd_cfg, &opt(3e-3, 2, 4), &data, None).unwrap();
    assert_eq!(kd.step_losses, pkd.step_losses);
    assert_eq!(m1, m2);
}

#[test]
fn cached_teacher_matches_live_teacher() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let dcfg = DistillConfig {
        alpha: 0.7,
        beta: 10.0,
        temperature: 10.0,
        strategy: DistillStrategy::Last,
        ..Default::default()
    };
    let cache = TeacherCache::build(&t, &data.train).unwrap();
    let (m1, live) = distill(&t, 2, &dcfg, &opt(3e-3, 2, 4), &data, None).unwrap();
    let (m2, cached) = distill(&t, 2, &dcfg, &opt(3e-3, 2, 4), &data, Some(&cache)).unwrap();
    assert!(live.same_outcome(&cached));
    assert_eq!(m1, m2);
}

#[test]
fn distillation_leaves_the_teacher_untouched_and_logs_consistent_totals() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let before = t.clone();
    let dcfg = DistillConfig {
        alpha: 0.5,
        beta: 100.0,
        temperature: 5.0,
        strategy: DistillStrategy::Skip,
        ..Default::default()
    };
    let (_, record) = distill(&t, 2, &dcfg, &opt(3e-3, 2, 4), &data, None).unwrap();
    assert_eq!(t, before);
    for e in &record.epochs {
        let b = e.train;
        let recombined = (1.0 - dcfg.alpha) * b.l_ce + dcfg.alpha * b.l_ds + dcfg.beta * b.l_pt;
        assert!((b.total - recombined).abs() < 1e-10, "{b:?}");
        assert!(b.l_pt > 0.0 && b.l_ds > 0.0);
    }
}

#[test]
fn full_copy_with_zero_epochs_reproduces_the_teacher() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let (student, record) = finetune_student(Some(&t), 4, &cfg, &opt(3e-3, 0, 0), &data).unwrap();
    assert_eq!(student, t);
    assert_eq!(record.selected_epoch, 0);
    assert_eq!(
        evaluate(&student, &data.dev).unwrap().accuracy,
        evaluate(&t, &data.dev).unwrap().accuracy
    );
}

#[test]
fn self_distillation_starts_at_the_fixed_point() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let student = init_student_from_teacher(&t, 4).unwrap();
    let (batch, _) = data.train.batch(&(0..16).collect::<Vec<_>>()).unwrap();
    let ts = t.forward(&batch).unwrap();
    let ss = student.forward(&batch).unwrap();
    let map = pkd_core::distill::build_layer_map(4, 4, DistillStrategy::Skip).unwrap();
    let s_cls = pkd_core::tensor::Tensor::new(
        vec![16, 3, cfg.hidden_dim],
        (0..16).flat_map(|i| ss.cls_matrix(i).data()[..3 * cfg.hidden_dim].to_vec()).collect(),
    )
    .unwrap();
    assert!(pkd_core::distill::loss_pt(&s_cls, &ts.cls_states, &map, 1e-12).unwrap() <= 1e-8);
    let p_t = softmax_rows(&ts.final_logits, 1.0).unwrap();
    assert!(loss_ds(&p_t, &ss.final_logits, 1.0, false).unwrap() - entropy(&p_t) <= 1e-6);
}

#[test]
fn divergence_is_reported() {
    let (data, cfg) = small_task();
    let mut t = teacher(&data, &cfg);
    t.classifier_weight_mut().data_mut()[0] = f64::NAN;
    let err = finetune_student(Some(&t), 2, &cfg, &opt(1e-3, 1, 0), &data).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, step: 1, .. }), "{err}");
}

#[test]
fn empty_split_cannot_be_evaluated() {
    let (data, cfg) = small_task();
    let model = EncoderModel::build(&cfg, 0).unwrap();
    let empty = EncodedSplit {
        seq_len: data.dev.seq_len,
        items: vec![],
        labels: vec![],
    };
    assert!(matches!(evaluate(&model, &empty), Err(Error::Input(_))));
}

#[test]
fn one_point_grid_equals_a_single_run() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let base = DistillConfig {
        alpha: 0.5,
        beta: 10.0,
        temperature: 5.0,
        strategy: DistillStrategy::Skip,
        ..Default::default()
    };
    let template = GridTemplate {
        teacher: &t,
        student_layers: 2,
        distill: base.clone(),
        optimizer: opt(0.0, 1, 6),
        data: &data,
        cache: None,
    };
    let grid = GridSpec {
        temperatures: vec![5.0],
        alphas: vec![0.5],
        betas: vec![10.0],
        learning_rates: vec![3e-3],
    };
    let results = grid_search(&grid, &template).unwrap();
    assert_eq!(results.len(), 1);
    let (_, single) = distill(&t, 2, &base, &opt(3e-3, 1, 6), &data, None).unwrap();
    assert!(results[0].outcome.as_ref().unwrap().same_outcome(&single));
}

#[test]
fn grid_ranking_is_stable_and_failures_are_kept() {
    let (data, cfg) = small_task();
    let t = teacher(&data, &cfg);
    let template = GridTemplate {
        teacher: &t,
        student_layers: 2,
        distill: DistillConfig {
            strategy: DistillStrategy::None,
            ..Default::default()
        },
        optimizer: opt(0.0, 1, 6),
        data: &data,
        cache: None,
    };
    let grid = GridSpec {
        temperatures: vec![5.0, 10.0],
        alphas: vec![0.5],
        betas: vec![0.0, 10.0],
        learning_rates: vec![3e-3],
    };
    let a = grid_search(&grid, &template).unwrap();
    let b = grid_search(&grid, &template).unwrap();
    let order = |r: &[pkd_core::train::GridResult]| r.iter().map(|x| x.index).collect::<Vec<_>>();
    assert_eq!(order(&a), order(&b));
    // beta > 0 is invalid with strategy none: recorded, ranked last
    assert_eq!(a.iter().filter(|r| r.outcome.is_err()).count(), 2);
    assert!(a[2].outcome.is_err() && a[3].outcome.is_err());
}
