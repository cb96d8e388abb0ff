use serde::Serialize;

use super::{ModelConfig, Network, Stage};
use crate::tcsconv::{BatchNorm, FloatPointwise, FrozenTernary, PointwiseLayer, PointwiseMode, SkipLink};
use crate::Result;

/// Bytes charged for one frozen layer stored as its generator spec.
pub const SPEC_BYTES: u64 = 16;
pub const FLOAT_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Depthwise,
    FloatPointwise,
    FrozenTernary,
    BatchNorm,
    IdentitySkip,
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerParams {
    pub name: String,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    pub trainable: usize,
    pub frozen_entries: usize,
    /// Storage when frozen layers are regenerated from their spec.
    pub bytes_on_the_fly: u64,
    /// Storage when frozen layers are kept at 2 bits per entry.
    pub bytes_materialized: u64,
}

impl LayerParams {
    fn float(name: String, kind: LayerKind, shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        let bytes = n as u64 * FLOAT_BYTES;
        LayerParams { name, kind, shape, trainable: n, frozen_entries: 0, bytes_on_the_fly: bytes, bytes_materialized: bytes }
    }

    fn frozen(name: String, layer: &FrozenTernary) -> Self {
        let spec = layer.spec();
        let entries = spec.rows * spec.cols;
        LayerParams {
            name,
            kind: LayerKind::FrozenTernary,
            shape: vec![spec.rows, spec.cols],
            trainable: 0,
            frozen_entries: entries,
            bytes_on_the_fly: SPEC_BYTES,
            bytes_materialized: entries.div_ceil(4) as u64,
        }
    }
}

/// Parameter census of a network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamReport {
    pub trainable_float_count: usize,
    /// Entries of all frozen ternary matrices.
    pub frozen_implicit_count: usize,
    pub stored_bytes_on_the_fly: u64,
    pub stored_bytes_materialized: u64,
    pub layers: Vec<LayerParams>,
}

fn pointwise(name: String, p: &FloatPointwise) -> LayerParams {
    LayerParams::float(name, LayerKind::FloatPointwise, vec![p.out_channels(), p.in_channels()])
}

fn batch_norm(name: String, bn: &BatchNorm) -> LayerParams {
    LayerParams::float(name, LayerKind::BatchNorm, vec![2, bn.channels()])
}

fn stage(prefix: &str, s: &Stage, out: &mut Vec<LayerParams>) {
    out.push(LayerParams::float(
        format!("{prefix}.depthwise"),
        LayerKind::Depthwise,
        vec![s.depthwise.channels(), s.depthwise.kernel()],
    ));
    out.push(pointwise(format!("{prefix}.pointwise"), &s.pointwise));
    out.push(batch_norm(format!("{prefix}.bn"), &s.bn));
}

/// Walks every layer of `net`. Frozen and identity layers contribute no
/// trainable values.
pub fn count_params(net: &Network) -> ParamReport {
    let mut layers = Vec::new();
    stage("prologue", &net.prologue, &mut layers);
    for (b, block) in net.blocks.iter().enumerate() {
        for i in 0..block.repeats() {
            let dw = block.depthwise(i);
            layers.push(LayerParams::float(
                format!("block{b}.sub{i}.depthwise"),
                LayerKind::Depthwise,
                vec![dw.channels(), dw.kernel()],
            ));
            let name = format!("block{b}.sub{i}.pointwise");
            layers.push(match block.pointwise(i) {
                PointwiseLayer::TrainableFloat(p) => pointwise(name, p),
                PointwiseLayer::FrozenTernary(t) => LayerParams::frozen(name, t),
            });
            layers.push(batch_norm(format!("block{b}.sub{i}.bn"), block.bn(i)));
        }
        let name = format!("block{b}.skip");
        match block.skip() {
            SkipLink::TrainedFloat(p) => layers.push(pointwise(name, p)),
            SkipLink::RandomTernary(t) => layers.push(LayerParams::frozen(name, t)),
            SkipLink::Identity => layers.push(LayerParams {
                name,
                kind: LayerKind::IdentitySkip,
                shape: vec![block.out_channels(), block.in_channels()],
                trainable: 0,
                frozen_entries: 0,
                bytes_on_the_fly: 0,
                bytes_materialized: 0,
            }),
            SkipLink::None => {}
        }
        if let Some(bn) = block.skip_bn() {
            layers.push(batch_norm(format!("block{b}.skip_bn"), bn));
        }
    }
    stage("epilogue", &net.epilogue, &mut layers);
    let cl = &net.classifier;
    layers.push(LayerParams::float(
        "classifier".into(),
        LayerKind::Classifier,
        vec![cl.classes(), cl.features() + 1],
    ));

    ParamReport {
        trainable_float_count: layers.iter().map(|l| l.trainable).sum(),
        frozen_implicit_count: layers.iter().map(|l| l.frozen_entries).sum(),
        stored_bytes_on_the_fly: layers.iter().map(|l| l.bytes_on_the_fly).sum(),
        stored_bytes_materialized: layers.iter().map(|l| l.bytes_materialized).sum(),
        layers,
    }
}

/// `base` with `blocks` residual blocks, all using block 0's kernel and skip
/// mode and the given pointwise mode.
pub fn deepen(base: &ModelConfig, blocks: usize, mode: PointwiseMode) -> ModelConfig {
    let mut cfg = base.clone();
    cfg.blocks = blocks;
    cfg.kernels = vec![base.kernels[0]; blocks];
    cfg.skip_mode = vec![base.skip_mode[0]; blocks];
    cfg.pointwise_mode = vec![mode; blocks];
    cfg
}

/// Largest block count, up to `max_blocks`, whose trainable parameters fit
/// in `budget` when every block uses `mode`. `None` if even one block does
/// not fit.
pub fn deepest_within_budget(
    base: &ModelConfig,
    mode: PointwiseMode,
    budget: usize,
    max_blocks: usize,
) -> Result<Option<usize>> {
    let mut best = None;
    for n in 1..=max_blocks {
        let report = count_params(&Network::build(&deepen(base, n, mode))?);
        if report.trainable_float_count > budget {
            break;
        }
        best = Some(n);
    }
    Ok(best)
}
