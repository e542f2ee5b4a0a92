mod common;

use common::{random_batch, toy_config};
use pkd_core::distill::{
    build_layer_map, entropy, kd_loss, loss_ds, loss_pt, pkd_loss, soft_labels, DistillConfig, DistillStrategy,
};
use pkd_core::encoder::EncoderModel;
use pkd_core::tensor::{softmax_rows, Tensor};
use pkd_core::Error;
use proptest::prelude::*;

fn divisible_pairs(max: usize) -> Vec<(usize, usize)> {
    (2..=max)
        .flat_map(|t| (2..=t).filter(move |n| t % n == 0).map(move |n| (t, n)))
        .collect()
}

#[test]
fn every_divisible_pair_up_to_24() {
    for (t, n) in divisible_pairs(24) {
        for strategy in [DistillStrategy::Skip, DistillStrategy::Last] {
            let map = build_layer_map(t, n, strategy).unwrap();
            let e = map.entries();
            assert_eq!(e.len(), n - 1, "{t} {n} {strategy}");
            assert!(e.windows(2).all(|w| w[0] < w[1]));
            assert!(e.iter().all(|&i| (1..t).contains(&i)), "{t} {n} {strategy}: {e:?}");
        }
    }
}

#[test]
fn paper_layer_maps() {
    assert_eq!(build_layer_map(12, 6, DistillStrategy::Skip).unwrap().entries(), &[2, 4, 6, 8, 10]);
    assert_eq!(build_layer_map(12, 6, DistillStrategy::Last).unwrap().entries(), &[7, 8, 9, 10, 11]);
}

#[test]
fn non_divisible_skip_and_deep_students_are_rejected() {
    assert!(matches!(build_layer_map(12, 5, DistillStrategy::Skip), Err(Error::Divisibility { .. })));
    assert!(matches!(build_layer_map(6, 12, DistillStrategy::Last), Err(Error::Depth { .. })));
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn last_map_for_any_valid_depths(t in 2usize..40, n in 2usize..40) {
        prop_assume!(n <= t);
        let map = build_layer_map(t, n, DistillStrategy::Last).unwrap();
        prop_assert_eq!(map.entries().len(), n - 1);
        prop_assert!(!map.entries().contains(&t));
    }

    #[test]
    fn cross_entropy_dominates_entropy(p in distribution(4), logits in prop::collection::vec(-5.0f64..5.0, 4)) {
        let pt = Tensor::new(vec![1, 4], p).unwrap();
        let z = Tensor::new(vec![1, 4], logits).unwrap();
        let ce = loss_ds(&pt, &z, 1.0, false).unwrap();
        prop_assert!(ce >= entropy(&pt) - 1e-12);
    }

    #[test]
    fn cross_entropy_equals_entropy_at_the_match(p in distribution(3)) {
        let pt = Tensor::new(vec![1, 3], p.clone()).unwrap();
        let z = Tensor::new(vec![1, 3], p.iter().map(|x| x.ln()).collect()).unwrap();
        let ce = loss_ds(&pt, &z, 1.0, false).unwrap();
        prop_assert!((ce - entropy(&pt)).abs() < 1e-10);
    }

    #[test]
    fn patient_terms_lie_in_zero_four(
        s in prop::collection::vec(-3.0f64..3.0, 4),
        t in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let map = build_layer_map(2, 2, DistillStrategy::Last).unwrap();
        let st = Tensor::new(vec![1, 1, 4], s).unwrap();
        let tt = Tensor::new(vec![1, 2, 4], t.clone()).unwrap();
        let l = loss_pt(&st, &tt, &map, 1e-12).unwrap();
        prop_assert!((0.0..=4.0 + 1e-12).contains(&l));
        // matching the mapped teacher state is the minimum
        let same = Tensor::new(vec![1, 1, 4], t[..4].to_vec()).unwrap();
        prop_assert!(loss_pt(&same, &tt, &map, 1e-12).unwrap() <= 1e-15);
    }

    #[test]
    fn pkd_is_linear_in_each_term(
        alpha in 0.0f64..=1.0, beta in 0.0f64..1000.0,
        ce in 0.0f64..5.0, ds in 0.0f64..5.0, pt in 0.0f64..5.0, k in 0.1f64..10.0,
    ) {
        let cfg = DistillConfig { alpha, beta, strategy: DistillStrategy::Skip, ..Default::default() };
        let base = pkd_loss(&cfg, ce, ds, pt);
        prop_assert!((base.total - ((1.0 - alpha) * ce + alpha * ds + beta * pt)).abs() < 1e-12 * (1.0 + base.total.abs()));
        let tol = 1e-10 * (1.0 + base.total.abs() * k);
        prop_assert!((pkd_loss(&cfg, k * ce, ds, pt).total - base.total - (k - 1.0) * (1.0 - alpha) * ce).abs() < tol);
        prop_assert!((pkd_loss(&cfg, ce, k * ds, pt).total - base.total - (k - 1.0) * alpha * ds).abs() < tol);
        prop_assert!((pkd_loss(&cfg, ce, ds, k * pt).total - base.total - (k - 1.0) * beta * pt).abs() < tol);
        let kd = DistillConfig { beta: 0.0, ..cfg };
        prop_assert_eq!(pkd_loss(&kd, ce, ds, pt).total, kd_loss(alpha, ce, ds));
    }
}

#[test]
fn soft_labels_examples() {
    let cfg = toy_config(2);
    let batch = random_batch(&cfg, 3, 6, 0);
    let mut teacher = EncoderModel::build(&cfg, 1).unwrap();
    let logits = teacher.forward(&batch).unwrap().final_logits;
    assert_eq!(soft_labels(&teacher, &batch, 1.0).unwrap(), softmax_rows(&logits, 1.0).unwrap());
    assert!(matches!(soft_labels(&teacher, &batch, 0.0), Err(Error::Domain(_))));
    teacher.classifier_weight_mut().data_mut().fill(0.0);
    let p = soft_labels(&teacher, &batch, 5.0).unwrap();
    assert!(p.data().iter().all(|&v| v == 0.5));
    let hot = softmax_rows(&Tensor::from_rows(&[&[1.0, 3.0]]).unwrap(), 1e6).unwrap();
    assert!(hot.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
}

#[test]
fn hidden_size_mismatch_is_reported() {
    let map = build_layer_map(4, 2, DistillStrategy::Skip).unwrap();
    let s = Tensor::zeros(&[2, 1, 8]);
    let t = Tensor::zeros(&[2, 4, 16]);
    let err = loss_pt(&s, &t, &map, 1e-12).unwrap_err();
    assert!(matches!(err, Error::HiddenSizeMismatch { student: 8, teacher: 16 }));
}
