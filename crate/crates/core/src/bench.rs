//! Kernel timings and a static operation-count model of whole networks.
//!
//! [`bench_matvec`] times every matrix representation on the same generated
//! matrix. Before any timing, each kernel's output is compared bit for bit
//! with the float reference; a mismatch aborts the run.
//!
//! [`model_cost`] predicts multiplications, additions and memory traffic of
//! one forward pass from layer shapes alone. Weights are charged once per
//! batch element, the same convention the ternary kernels use when they
//! count their own traffic.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::linalg::{
    matvec, pointwise_apply, pointwise_apply_par, reference_float_matvec, DenseTernary, IndexPairMatrix, OnTheFly,
    OpCounter, PackedBitplanes, TernaryOperator,
};
use crate::model::Network;
use crate::tcsconv::{uniform_fill, FrozenTernary, PointwiseLayer, SkipLink, Tensor};
use crate::weightgen::{generate, Generator, WeightSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Entries cast to `f32` and multiplied in.
    DenseFloat,
    /// One byte per entry, branch on the value.
    DenseTernary,
    IndexPair,
    Bitplane,
    /// Regenerates each row from the spec while accumulating.
    OnTheFly,
    /// Index-pair 1x1-convolution over a batch, one thread.
    PointwiseSeq,
    /// The same 1x1-convolution with batch elements spread over threads.
    PointwisePar,
}

impl Kernel {
    pub const MATVEC: [Kernel; 5] =
        [Kernel::DenseFloat, Kernel::DenseTernary, Kernel::IndexPair, Kernel::Bitplane, Kernel::OnTheFly];
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::DenseFloat => "dense_float",
            Kernel::DenseTernary => "dense_ternary",
            Kernel::IndexPair => "index_pair",
            Kernel::Bitplane => "bitplane",
            Kernel::OnTheFly => "on_the_fly",
            Kernel::PointwiseSeq => "pointwise_seq",
            Kernel::PointwisePar => "pointwise_par",
        })
    }
}

/// One timed kernel on one matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub kernel: Kernel,
    pub rows: usize,
    pub cols: usize,
    pub t: f64,
    pub reps: usize,
    pub median_ns: u64,
    /// Counts of a single call.
    pub multiplications: u64,
    pub additions: u64,
    pub weight_bytes_read: u64,
}

pub const BENCH_CSV_HEADER: &str = "kernel,rows,cols,t,reps,median_ns,multiplications,additions,weight_bytes_read";

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.kernel, r.rows, r.cols, r.t, r.reps, r.median_ns, r.multiplications, r.additions, r.weight_bytes_read
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// `(rows, cols)` pairs.
    pub shapes: Vec<(usize, usize)>,
    pub t_list: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub generator: Generator,
    /// Above 1, adds sequential and parallel 1x1-convolution rows run on a
    /// pool of this many threads.
    pub threads: usize,
    /// Batch and time of the 1x1-convolution measurement.
    pub panel: (usize, usize),
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            shapes: vec![(256, 256), (512, 512)],
            t_list: vec![0.0, 0.5, 0.9],
            reps: 21,
            seed: 1,
            generator: Generator::SequentialStream,
            threads: 1,
            panel: (16, 64),
        }
    }
}

fn median_ns(reps: usize, mut f: impl FnMut()) -> u64 {
    f();
    let mut times: Vec<u64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_nanos() as u64
        })
        .collect();
    times.sort_unstable();
    times[times.len() / 2]
}

/// Fails with the first index where `got` and `reference` differ in any bit.
pub fn check_bit_exact(kernel: Kernel, got: &[f32], reference: &[f32]) -> Result<()> {
    let index = got.iter().zip(reference).position(|(x, y)| x.to_bits() != y.to_bits());
    match index {
        Some(index) => Err(Error::KernelMismatch { kernel: kernel.to_string(), index }),
        None if got.len() != reference.len() => {
            Err(Error::KernelMismatch { kernel: kernel.to_string(), index: got.len().min(reference.len()) })
        }
        None => Ok(()),
    }
}

fn run_kernel(
    kernel: Kernel,
    dense: &DenseTernary,
    pairs: &IndexPairMatrix,
    planes: &PackedBitplanes,
    fly: &OnTheFly,
    x: &[f32],
    c: &mut OpCounter,
) -> Result<Vec<f32>> {
    match kernel {
        Kernel::DenseFloat => reference_float_matvec(dense, x, c),
        Kernel::DenseTernary => matvec(dense, x, c),
        Kernel::IndexPair => matvec(pairs, x, c),
        Kernel::Bitplane => matvec(planes, x, c),
        Kernel::OnTheFly => matvec(fly, x, c),
        Kernel::PointwiseSeq | Kernel::PointwisePar => unreachable!("panel kernels are timed separately"),
    }
}

/// Times every representation on each `(shape, t)` pair.
///
/// # Errors
/// [`Error::KernelMismatch`] if any kernel's output differs from the float
/// reference in a single bit.
pub fn bench_matvec(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.reps == 0 {
        return Err(Error::config("reps must be at least 1"));
    }
    if cfg.threads == 0 {
        return Err(Error::config("threads must be at least 1"));
    }
    let mut out = Vec::new();
    for &(rows, cols) in &cfg.shapes {
        for &t in &cfg.t_list {
            let spec = WeightSpec::new(cfg.seed, 0, rows, cols, t, cfg.generator)?;
            let dense = generate(&spec)?;
            let pairs = IndexPairMatrix::from(&dense);
            let planes = PackedBitplanes::from(&dense);
            let fly = OnTheFly::new(spec)?;
            let mut x = vec![0.0; cols];
            uniform_fill(cfg.seed ^ rows as u64 ^ ((cols as u64) << 32), 1.0, &mut x);
            let reference = reference_float_matvec(&dense, &x, &mut OpCounter::default())?;

            for kernel in Kernel::MATVEC {
                let mut counter = OpCounter::default();
                let y = run_kernel(kernel, &dense, &pairs, &planes, &fly, &x, &mut counter)?;
                check_bit_exact(kernel, &y, &reference)?;
                let ns = median_ns(cfg.reps, || {
                    let mut c = OpCounter::default();
                    std::hint::black_box(run_kernel(kernel, &dense, &pairs, &planes, &fly, &x, &mut c).unwrap());
                });
                out.push(BenchRow {
                    kernel,
                    rows,
                    cols,
                    t,
                    reps: cfg.reps,
                    median_ns: ns,
                    multiplications: counter.multiplications,
                    additions: counter.additions,
                    weight_bytes_read: counter.weight_bytes_read,
                });
            }
            if cfg.threads > 1 {
                out.extend(bench_pointwise(cfg, &pairs, t)?);
            }
        }
    }
    Ok(out)
}

fn bench_pointwise(cfg: &BenchConfig, m: &IndexPairMatrix, t: f64) -> Result<Vec<BenchRow>> {
    let (batch, time) = cfg.panel;
    let mut data = vec![0.0; batch * m.cols() * time];
    uniform_fill(cfg.seed ^ 0xBA7C4, 1.0, &mut data);
    let x = Tensor::from_vec([batch, m.cols(), time], data)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;

    let mut seq_counter = OpCounter::default();
    let seq = pointwise_apply(m, &x, &mut seq_counter)?;
    let mut par_counter = OpCounter::default();
    let par = pool.install(|| pointwise_apply_par(m, &x, &mut par_counter))?;
    check_bit_exact(Kernel::PointwisePar, par.data(), seq.data())?;
    let seq_ns = median_ns(cfg.reps, || {
        std::hint::black_box(pointwise_apply(m, &x, &mut OpCounter::default()).unwrap());
    });
    let par_ns = pool.install(|| {
        median_ns(cfg.reps, || {
            std::hint::black_box(pointwise_apply_par(m, &x, &mut OpCounter::default()).unwrap());
        })
    });
    let row = |kernel, median_ns, c: OpCounter| BenchRow {
        kernel,
        rows: m.rows(),
        cols: m.cols(),
        t,
        reps: cfg.reps,
        median_ns,
        multiplications: c.multiplications,
        additions: c.additions,
        weight_bytes_read: c.weight_bytes_read,
    };
    Ok(vec![row(Kernel::PointwiseSeq, seq_ns, seq_counter), row(Kernel::PointwisePar, par_ns, par_counter)])
}

/// Where frozen ternary weights come from during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Regenerated from the spec; no weight memory traffic.
    OnTheFly,
    /// Read from the stored index-pair form.
    Materialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Depthwise,
    FloatPointwise,
    TernaryPointwise,
    BatchNorm,
    ResidualAdd,
    Pool,
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: CostKind,
    /// Stored or implicit weight entries.
    pub weights: usize,
    pub multiplications: u64,
    pub additions: u64,
    pub weight_bytes_read: u64,
    pub activation_bytes_read: u64,
    pub activation_bytes_written: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCost {
    pub input_shape: [usize; 3],
    pub t: f64,
    pub policy: WeightPolicy,
    pub layers: Vec<LayerCost>,
    pub total: OpCounter,
    pub pointwise_weights: usize,
    pub depthwise_weights: usize,
}

impl ModelCost {
    /// Pointwise (and skip) matrices hold more weights than depthwise kernels.
    pub fn pointwise_dominates(&self) -> bool {
        self.pointwise_weights > self.depthwise_weights
    }

    pub fn layer(&self, name: &str) -> Option<&LayerCost> {
        self.layers.iter().find(|l| l.name == name)
    }
}

const F32: u64 = 4;

/// Number of in-range taps of a same-padded kernel over `time` steps.
fn valid_taps(kernel: usize, time: usize) -> u64 {
    let half = kernel / 2;
    (0..time).map(|t| ((t + half).min(time - 1) + 1 - t.saturating_sub(half)) as u64).sum()
}

struct CostBuilder {
    batch: usize,
    time: usize,
    policy: WeightPolicy,
    layers: Vec<LayerCost>,
}

impl CostBuilder {
    fn act(&self, channels: usize) -> u64 {
        F32 * (self.batch * channels * self.time) as u64
    }

    fn depthwise(&mut self, name: String, channels: usize, kernel: usize) {
        let taps = (self.batch * channels) as u64 * valid_taps(kernel, self.time);
        self.layers.push(LayerCost {
            name,
            kind: CostKind::Depthwise,
            weights: channels * kernel,
            multiplications: taps,
            additions: taps,
            weight_bytes_read: self.batch as u64 * F32 * (channels * kernel) as u64,
            activation_bytes_read: self.act(channels),
            activation_bytes_written: self.act(channels),
        });
    }

    fn float_pointwise(&mut self, name: String, rows: usize, cols: usize) {
        let macs = (rows * cols * self.batch * self.time) as u64;
        self.layers.push(LayerCost {
            name,
            kind: CostKind::FloatPointwise,
            weights: rows * cols,
            multiplications: macs,
            additions: macs,
            weight_bytes_read: self.batch as u64 * F32 * (rows * cols) as u64,
            activation_bytes_read: self.act(cols),
            activation_bytes_written: self.act(rows),
        });
    }

    fn ternary_pointwise(&mut self, name: String, layer: &FrozenTernary) {
        let m = layer.matrix();
        let (rows, cols, nnz) = (m.rows(), m.cols(), m.nnz());
        let weight_bytes = match self.policy {
            WeightPolicy::OnTheFly => 0,
            WeightPolicy::Materialized => self.batch as u64 * m.index_bytes() as u64,
        };
        self.layers.push(LayerCost {
            name,
            kind: CostKind::TernaryPointwise,
            weights: rows * cols,
            multiplications: 0,
            additions: ((nnz + rows) * self.batch * self.time) as u64,
            weight_bytes_read: weight_bytes,
            activation_bytes_read: self.act(cols),
            activation_bytes_written: self.act(rows),
        });
    }

    /// Inference form: one multiply by the folded scale, one subtraction of
    /// the mean, one addition of the shift per element.
    fn batch_norm(&mut self, name: String, channels: usize) {
        let n = (self.batch * channels * self.time) as u64;
        self.layers.push(LayerCost {
            name,
            kind: CostKind::BatchNorm,
            weights: 2 * channels,
            multiplications: n,
            additions: 2 * n,
            weight_bytes_read: self.batch as u64 * F32 * 4 * channels as u64,
            activation_bytes_read: self.act(channels),
            activation_bytes_written: self.act(channels),
        });
    }

    fn residual(&mut self, name: String, channels: usize) {
        self.layers.push(LayerCost {
            name,
            kind: CostKind::ResidualAdd,
            weights: 0,
            multiplications: 0,
            additions: (self.batch * channels * self.time) as u64,
            weight_bytes_read: 0,
            activation_bytes_read: 2 * self.act(channels),
            activation_bytes_written: self.act(channels),
        });
    }
}

/// Static cost of one inference forward pass on input `[batch, C, T]`.
pub fn model_cost(net: &Network, input_shape: [usize; 3], policy: WeightPolicy) -> Result<ModelCost> {
    let [batch, channels, time] = input_shape;
    let cfg = net.config();
    if channels != cfg.in_channels || batch == 0 || time == 0 {
        return Err(Error::shape(format!(
            "input shape {input_shape:?} does not fit a network with {} input channels",
            cfg.in_channels
        )));
    }
    let mut b = CostBuilder { batch, time, policy, layers: Vec::new() };
    let w = cfg.width;
    b.depthwise("prologue.depthwise".into(), channels, net.prologue.depthwise.kernel());
    b.float_pointwise("prologue.pointwise".into(), w, channels);
    b.batch_norm("prologue.bn".into(), w);
    for (i, block) in net.blocks.iter().enumerate() {
        for s in 0..block.repeats() {
            let dw = block.depthwise(s);
            b.depthwise(format!("block{i}.sub{s}.depthwise"), dw.channels(), dw.kernel());
            let name = format!("block{i}.sub{s}.pointwise");
            match block.pointwise(s) {
                PointwiseLayer::TrainableFloat(p) => b.float_pointwise(name, p.out_channels(), p.in_channels()),
                PointwiseLayer::FrozenTernary(t) => b.ternary_pointwise(name, t),
            }
            b.batch_norm(format!("block{i}.sub{s}.bn"), block.out_channels());
        }
        let name = format!("block{i}.skip");
        match block.skip() {
            SkipLink::TrainedFloat(p) => b.float_pointwise(name, p.out_channels(), p.in_channels()),
            SkipLink::RandomTernary(t) => b.ternary_pointwise(name, t),
            SkipLink::Identity | SkipLink::None => {}
        }
        if block.skip_bn().is_some() {
            b.batch_norm(format!("block{i}.skip_bn"), block.out_channels());
            b.residual(format!("block{i}.residual"), block.out_channels());
        }
    }
    b.depthwise("epilogue.depthwise".into(), w, net.epilogue.depthwise.kernel());
    b.float_pointwise("epilogue.pointwise".into(), w, w);
    b.batch_norm("epilogue.bn".into(), w);
    let act = b.act(w);
    b.layers.push(LayerCost {
        name: "pool".into(),
        kind: CostKind::Pool,
        weights: 0,
        multiplications: (batch * w) as u64,
        additions: (batch * w * time) as u64,
        weight_bytes_read: 0,
        activation_bytes_read: act,
        activation_bytes_written: F32 * (batch * w) as u64,
    });
    let classes = cfg.num_classes;
    b.layers.push(LayerCost {
        name: "classifier".into(),
        kind: CostKind::Classifier,
        weights: classes * (w + 1),
        multiplications: (batch * classes * w) as u64,
        additions: (batch * classes * w) as u64,
        weight_bytes_read: batch as u64 * F32 * (classes * (w + 1)) as u64,
        activation_bytes_read: F32 * (batch * w) as u64,
        activation_bytes_written: F32 * (batch * classes) as u64,
    });

    let mut total = OpCounter::default();
    for l in &b.layers {
        total.merge(&OpCounter {
            multiplications: l.multiplications,
            additions: l.additions,
            weight_bytes_read: l.weight_bytes_read,
        });
    }
    let sum_kind = |kinds: &[CostKind]| b.layers.iter().filter(|l| kinds.contains(&l.kind)).map(|l| l.weights).sum();
    Ok(ModelCost {
        input_shape,
        t: cfg.threshold,
        policy,
        pointwise_weights: sum_kind(&[CostKind::FloatPointwise, CostKind::TernaryPointwise, CostKind::Classifier]),
        depthwise_weights: sum_kind(&[CostKind::Depthwise]),
        layers: b.layers,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_taps_match_brute_force() {
        for k in [1, 3, 5, 9] {
            for time in [1, 2, 4, 9, 16] {
                let half = (k / 2) as i64;
                let brute = (0..time as i64)
                    .map(|t| (0..k as i64).filter(|j| (0..time as i64).contains(&(t + j - half))).count() as u64)
                    .sum::<u64>();
                assert_eq!(valid_taps(k, time), brute, "k {k} time {time}");
            }
        }
    }

    #[test]
    fn median_of_sorted_samples() {
        let mut calls = 0;
        let ns = median_ns(5, || calls += 1);
        assert_eq!(calls, 6);
        assert!(ns < 1_000_000_000);
    }
}
