use pkd_core::bench::{bench_inference, curves_csv, BenchReport, BenchSpec};
use pkd_core::encoder::{count_params, EncoderConfig};
use proptest::prelude::*;

fn mini(layers: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size: 50,
        max_seq_len: 16,
        hidden_dim: 16,
        num_layers: layers,
        num_heads: 2,
        ffn_dim: 32,
        num_classes: 2,
        dropout_prob: 0.0,
        layer_norm_eps: 1e-12,
    }
}

#[test]
fn measured_report_rows_follow_count_params() {
    let spec = BenchSpec {
        batch_size: 2,
        seq_len: 8,
        repeats: 3,
        seed: 0,
    };
    let report = bench_inference(&mini(4), &[2, 4, 1], &spec).unwrap();
    let depths: Vec<usize> = report.rows.iter().map(|r| r.num_layers).collect();
    assert_eq!(depths, [4, 2, 1]);
    assert_eq!(report.rows[0].speedup_vs_deepest, 1.0);
    for r in &report.rows {
        let p = count_params(&mini(r.num_layers));
        assert_eq!((r.emb_params, r.trm_params, r.total_params), (p.emb_params, p.trm_params, p.total));
        assert!(r.inference_seconds > 0.0);
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("num_layers,emb_params,trm_params,total_params,inference_seconds,"));
}

#[test]
fn too_few_repeats_are_rejected() {
    let spec = BenchSpec {
        batch_size: 1,
        seq_len: 4,
        repeats: 2,
        seed: 0,
    };
    assert!(bench_inference(&mini(2), &[2], &spec).is_err());
}

#[test]
fn curves_need_at_least_one_run() {
    assert!(curves_csv(&[]).is_err());
}

proptest! {
    #[test]
    fn transformer_column_is_linear_in_depth(depths in proptest::collection::btree_set(1usize..=24, 1..6)) {
        let timings: Vec<(usize, f64)> = depths.iter().map(|&d| (d, d as f64)).collect();
        let report = BenchReport::from_measurements(&EncoderConfig::bert_base(12), &timings).unwrap();
        let per_layer = count_params(&EncoderConfig::bert_base(1)).trm_params;
        let deepest = *depths.iter().max().unwrap();
        for r in &report.rows {
            prop_assert_eq!(r.trm_params, r.num_layers * per_layer);
            prop_assert_eq!(r.total_params, count_params(&EncoderConfig::bert_base(r.num_layers)).total);
            // timings proportional to depth give exact depth ratios
            prop_assert!((r.speedup_vs_deepest - deepest as f64 / r.num_layers as f64).abs() < 1e-12);
        }
        prop_assert!(report.rows.windows(2).all(|w| w[0].num_layers > w[1].num_layers));
    }
}
