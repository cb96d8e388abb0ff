mod common;

use common::random_tensor;
use rtconv::bench::*;
use rtconv::model::{ModelConfig, Network};
use rtconv::tcsconv::{PointwiseMode, SkipMode};
use rtconv::Error;

fn rows_for(rows: &[BenchRow], kernel: Kernel, t: f64) -> &BenchRow {
    rows.iter().find(|r| r.kernel == kernel && r.t == t).unwrap()
}

#[test]
fn counters_follow_the_counting_rule() {
    let cfg = BenchConfig { shapes: vec![(512, 512)], t_list: vec![0.0, 0.9, 1.0], reps: 1, ..BenchConfig::default() };
    let rows = bench_matvec(&cfg).unwrap();
    assert_eq!(rows.len(), 3 * Kernel::MATVEC.len());
    for kernel in [Kernel::DenseTernary, Kernel::IndexPair, Kernel::Bitplane, Kernel::OnTheFly] {
        let dense = rows_for(&rows, kernel, 0.0);
        let sparse = rows_for(&rows, kernel, 0.9);
        let empty = rows_for(&rows, kernel, 1.0);
        assert_eq!(empty.additions, 512, "{kernel}");
        for r in [dense, sparse, empty] {
            assert_eq!(r.multiplications, 0, "{kernel}");
        }
        let ratio = sparse.additions as f64 / dense.additions as f64;
        assert!((ratio - 0.1).abs() <= 0.01, "{kernel}: ratio {ratio}");
    }
    for t in [0.0, 0.9, 1.0] {
        assert_eq!(rows_for(&rows, Kernel::OnTheFly, t).weight_bytes_read, 0);
        assert_eq!(rows_for(&rows, Kernel::DenseFloat, t).multiplications, 512 * 512);
        assert_eq!(rows_for(&rows, Kernel::DenseTernary, t).weight_bytes_read, 512 * 512);
    }
}

#[test]
fn csv_has_header_and_one_line_per_row() {
    let cfg = BenchConfig { shapes: vec![(8, 16), (4, 4)], t_list: vec![0.5], reps: 3, threads: 2, ..BenchConfig::default() };
    let rows = bench_matvec(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * (Kernel::MATVEC.len() + 2));
    let seq = rows.iter().find(|r| r.kernel == Kernel::PointwiseSeq).unwrap();
    let par = rows.iter().find(|r| r.kernel == Kernel::PointwisePar).unwrap();
    assert_eq!(
        (seq.multiplications, seq.additions, seq.weight_bytes_read),
        (par.multiplications, par.additions, par.weight_bytes_read)
    );
    let mut csv = Vec::new();
    write_bench_csv(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(BENCH_CSV_HEADER));
    assert_eq!(lines.count(), rows.len());
}

#[test]
fn mismatch_aborts() {
    assert!(check_bit_exact(Kernel::Bitplane, &[1.0, 2.0], &[1.0, 2.0]).is_ok());
    let err = check_bit_exact(Kernel::Bitplane, &[1.0, 2.0, 3.0], &[1.0, 2.0000002, 3.0]).unwrap_err();
    assert!(matches!(err, Error::KernelMismatch { index: 1, ref kernel } if kernel == "bitplane"));
    assert!(check_bit_exact(Kernel::IndexPair, &[0.0], &[-0.0]).is_err());
    assert!(check_bit_exact(Kernel::IndexPair, &[0.0], &[0.0, 1.0]).is_err());
}

#[test]
fn bad_bench_configs_are_rejected() {
    assert!(bench_matvec(&BenchConfig { reps: 0, ..BenchConfig::default() }).is_err());
    assert!(bench_matvec(&BenchConfig { t_list: vec![2.0], reps: 1, ..BenchConfig::default() }).is_err());
}

fn fp(n: usize, w: usize) -> ModelConfig {
    ModelConfig::uniform(n, 1, w, 16, 8, 9, PointwiseMode::Float, SkipMode::Trained, 0.5, 3)
}

#[test]
fn pointwise_weights_dominate_fp_networks() {
    let (n, w, k, c_in, classes) = (3, 64, 9, 16, 8);
    let cost = model_cost(&Network::build(&fp(n, w)).unwrap(), [1, c_in, 32], WeightPolicy::Materialized).unwrap();
    let pointwise = c_in * w + n * 2 * w * w + w * w + classes * (w + 1);
    let depthwise = c_in * k + n * w * k + w * k;
    assert_eq!(cost.pointwise_weights, pointwise);
    assert_eq!(cost.depthwise_weights, depthwise);
    assert!(cost.pointwise_dominates());
}

#[test]
fn doubling_width_scales_block_weights() {
    let a = model_cost(&Network::build(&fp(2, 32)).unwrap(), [1, 16, 32], WeightPolicy::OnTheFly).unwrap();
    let b = model_cost(&Network::build(&fp(2, 64)).unwrap(), [1, 16, 32], WeightPolicy::OnTheFly).unwrap();
    for name in ["block0.sub0.pointwise", "block1.skip", "epilogue.pointwise"] {
        assert_eq!(b.layer(name).unwrap().weights, 4 * a.layer(name).unwrap().weights);
    }
    for name in ["block0.sub0.depthwise", "epilogue.depthwise"] {
        assert_eq!(b.layer(name).unwrap().weights, 2 * a.layer(name).unwrap().weights);
    }
}

#[test]
fn ternary_blocks_multiply_only_outside_the_matrices() {
    let cfg = ModelConfig::uniform(3, 2, 32, 16, 8, 9, PointwiseMode::Ternary, SkipMode::Ternary, 0.5, 3);
    let cost = model_cost(&Network::build(&cfg).unwrap(), [2, 16, 32], WeightPolicy::OnTheFly).unwrap();
    let mut ternary_layers = 0;
    for l in &cost.layers {
        if l.kind == CostKind::TernaryPointwise {
            ternary_layers += 1;
            assert_eq!(l.multiplications, 0);
            assert_eq!(l.weight_bytes_read, 0);
        }
    }
    assert_eq!(ternary_layers, 3 * 3);
    let outside: u64 = cost
        .layers
        .iter()
        .filter(|l| l.kind != CostKind::TernaryPointwise)
        .map(|l| l.multiplications)
        .sum();
    assert_eq!(cost.total.multiplications, outside);
    assert!(cost
        .layers
        .iter()
        .filter(|l| l.name.starts_with("block") && l.multiplications > 0)
        .all(|l| matches!(l.kind, CostKind::Depthwise | CostKind::BatchNorm)));
}

#[test]
fn dynamic_counters_equal_static_prediction() {
    let cfg = ModelConfig::uniform(2, 2, 24, 16, 8, 5, PointwiseMode::Ternary, SkipMode::Ternary, 0.7, 4)
        .with_pointwise([0], PointwiseMode::Float);
    let mut net = Network::build(&cfg).unwrap();
    let shape = [3, 16, 20];
    net.reset_counters();
    net.forward(&random_tensor(2, shape, 1.0), false).unwrap();
    let cost = model_cost(&net, shape, WeightPolicy::Materialized).unwrap();
    let frozen = net.frozen_layers();
    let statics: Vec<&LayerCost> = cost.layers.iter().filter(|l| l.kind == CostKind::TernaryPointwise).collect();
    assert_eq!(frozen.len(), statics.len());
    for (layer, predicted) in frozen.iter().zip(statics) {
        assert_eq!(layer.counter.multiplications, predicted.multiplications, "{}", predicted.name);
        assert_eq!(layer.counter.additions, predicted.additions, "{}", predicted.name);
        assert_eq!(layer.counter.weight_bytes_read, predicted.weight_bytes_read, "{}", predicted.name);
    }
}

#[test]
fn model_cost_rejects_wrong_input() {
    let net = Network::build(&fp(1, 8)).unwrap();
    assert!(model_cost(&net, [1, 3, 32], WeightPolicy::OnTheFly).is_err());
}
