use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::linalg::OpCounter;
use crate::tcsconv::{
    init_seed, relu, relu_backward, uniform_fill, BatchNorm, BnCache, Block, BlockCache, BlockConfig,
    DepthwiseConv, FloatPointwise, FrozenTernary, Param, Parameterized, Tensor,
};
use crate::{Error, Result};

/// Depthwise conv, float pointwise, batch norm, ReLU. Used for the prologue
/// and the epilogue.
#[derive(Debug, Clone)]
pub struct Stage {
    pub depthwise: DepthwiseConv,
    pub pointwise: FloatPointwise,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone)]
struct StageCache {
    input: Tensor,
    depthwise_out: Tensor,
    bn: BnCache,
    pre_activation: Tensor,
}

impl Stage {
    fn new(cfg: &ModelConfig, c_in: usize, kernel: usize, tag: u64) -> Result<Self> {
        Ok(Stage {
            depthwise: DepthwiseConv::new(c_in, kernel)?.init(init_seed(cfg.seed, tag, 1)),
            pointwise: FloatPointwise::new(cfg.width, c_in).init(init_seed(cfg.seed, tag, 0)),
            bn: BatchNorm::with_hyper(cfg.width, cfg.bn_eps, cfg.bn_momentum),
        })
    }

    fn forward(&mut self, x: &Tensor, training: bool) -> Result<(Tensor, StageCache)> {
        let d = self.depthwise.forward(x)?;
        let p = self.pointwise.forward(&d)?;
        let (z, bn) = self.bn.forward(&p, training)?;
        let y = relu(&z);
        Ok((y, StageCache { input: x.clone(), depthwise_out: d, bn, pre_activation: z }))
    }

    fn backward(&mut self, cache: &StageCache, dy: &Tensor) -> Result<Tensor> {
        let dz = relu_backward(&cache.pre_activation, dy)?;
        let dp = self.bn.backward(&cache.bn, &dz)?;
        let dd = self.pointwise.backward(&cache.depthwise_out, &dp)?;
        self.depthwise.backward(&cache.input, &dd)
    }
}

impl Parameterized for Stage {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        self.depthwise.collect_params(&format!("{prefix}depthwise."), out);
        self.pointwise.collect_params(&format!("{prefix}pointwise."), out);
        self.bn.collect_params(&format!("{prefix}bn."), out);
    }
}

/// Affine map from pooled features to class logits.
#[derive(Debug, Clone)]
pub struct Classifier {
    classes: usize,
    features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub grad_weight: Vec<f32>,
    pub grad_bias: Vec<f32>,
}

impl Classifier {
    fn new(classes: usize, features: usize, seed: u64) -> Self {
        let mut weight = vec![0.0; classes * features];
        uniform_fill(seed, (1.0 / features as f32).sqrt(), &mut weight);
        Classifier {
            classes,
            features,
            weight,
            bias: vec![0.0; classes],
            grad_weight: vec![0.0; classes * features],
            grad_bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }
}

impl Parameterized for Classifier {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        out.push(Param { name: format!("{prefix}weight"), value: &mut self.weight, grad: &mut self.grad_weight });
        out.push(Param { name: format!("{prefix}bias"), value: &mut self.bias, grad: &mut self.grad_bias });
    }
}

/// Intermediates of [`Network::forward`].
#[derive(Debug, Clone)]
pub struct NetworkCache {
    prologue: StageCache,
    blocks: Vec<BlockCache>,
    epilogue: StageCache,
    /// Time-averaged epilogue output, `[batch][W]`.
    pooled: Vec<f32>,
    shape: [usize; 3],
}

/// Prologue, `N` residual blocks, epilogue, average pool, linear classifier.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    pub prologue: Stage,
    pub blocks: Vec<Block>,
    pub epilogue: Stage,
    pub classifier: Classifier,
}

impl Network {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let prologue = Stage::new(config, config.in_channels, config.prologue_kernel, ModelConfig::PROLOGUE_TAG)?;
        let mut blocks = Vec::with_capacity(config.blocks);
        for b in 0..config.blocks {
            let block = Block::new(&BlockConfig {
                in_channels: config.width,
                out_channels: config.width,
                repeats: config.repeats,
                kernel: config.kernels[b],
                pointwise: config.pointwise_mode[b],
                skip: config.skip_mode[b],
                threshold: config.threshold,
                generator: config.generator,
                seed: config.seed,
                first_layer_tag: config.block_tag(b),
                bn_eps: config.bn_eps,
                bn_momentum: config.bn_momentum,
            })
            .map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("block {b}: {msg}")),
                other => other,
            })?;
            blocks.push(block);
        }
        let epilogue = Stage::new(config, config.width, config.epilogue_kernel, config.epilogue_tag())?;
        let classifier =
            Classifier::new(config.num_classes, config.width, init_seed(config.seed, config.classifier_tag(), 0));
        Ok(Network { config: config.clone(), prologue, blocks, epilogue, classifier })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Logits, row-major `[batch][num_classes]`.
    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<(Vec<f32>, NetworkCache)> {
        if x.channels() != self.config.in_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        let (mut h, prologue) = self.prologue.forward(x, training)?;
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in self.blocks.iter_mut() {
            let (y, c) = block.forward(&h, training)?;
            block_caches.push(c);
            h = y;
        }
        let (h, epilogue) = self.epilogue.forward(&h, training)?;

        let (batch, width, time) = (h.batch(), h.channels(), h.time());
        let mut pooled = vec![0.0f32; batch * width];
        for b in 0..batch {
            for c in 0..width {
                pooled[b * width + c] = h.lane(b, c).iter().sum::<f32>() / time as f32;
            }
        }
        let cl = &self.classifier;
        let mut logits = vec![0.0f32; batch * cl.classes];
        for b in 0..batch {
            let f = &pooled[b * width..(b + 1) * width];
            for k in 0..cl.classes {
                let w = &cl.weight[k * width..(k + 1) * width];
                logits[b * cl.classes + k] = cl.bias[k] + w.iter().zip(f).map(|(a, v)| a * v).sum::<f32>();
            }
        }
        Ok((logits, NetworkCache { prologue, blocks: block_caches, epilogue, pooled, shape: h.shape() }))
    }

    /// Accumulates parameter gradients from `dlogits` and returns the input gradient.
    pub fn backward(&mut self, cache: &NetworkCache, dlogits: &[f32]) -> Result<Tensor> {
        let [batch, width, time] = cache.shape;
        let classes = self.classifier.classes;
        if dlogits.len() != batch * classes {
            return Err(Error::shape(format!(
                "logit gradient has {} values, expected {}",
                dlogits.len(),
                batch * classes
            )));
        }
        let cl = &mut self.classifier;
        let mut dpooled = vec![0.0f32; batch * width];
        for b in 0..batch {
            let f = &cache.pooled[b * width..(b + 1) * width];
            let df = &mut dpooled[b * width..(b + 1) * width];
            for k in 0..classes {
                let g = dlogits[b * classes + k];
                cl.grad_bias[k] += g;
                let w = &cl.weight[k * width..(k + 1) * width];
                let gw = &mut cl.grad_weight[k * width..(k + 1) * width];
                for c in 0..width {
                    gw[c] += g * f[c];
                    df[c] += g * w[c];
                }
            }
        }
        let mut g = Tensor::from_fn(cache.shape, |b, c, _| dpooled[b * width + c] / time as f32);
        g = self.epilogue.backward(&cache.epilogue, &g)?;
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = block.backward(c, &g)?;
        }
        self.prologue.backward(&cache.prologue, &g)
    }

    /// Must follow every parameter update so stale caches are rejected.
    pub fn mark_updated(&mut self) {
        for b in self.blocks.iter_mut() {
            b.mark_updated();
        }
    }

    /// Every frozen ternary layer, in layer-tag order.
    pub fn frozen_layers(&self) -> Vec<&FrozenTernary> {
        self.blocks.iter().flat_map(|b| b.frozen_layers()).collect()
    }

    /// Operation counts accumulated by the frozen layers since the last reset.
    pub fn ternary_ops(&self) -> OpCounter {
        let mut total = OpCounter::default();
        for b in &self.blocks {
            total.merge(&b.ternary_ops());
        }
        total
    }

    pub fn reset_counters(&mut self) {
        for b in self.blocks.iter_mut() {
            b.reset_counters();
        }
    }

    /// SHA-256 of each frozen layer's materialized matrix, keyed by layer tag.
    pub fn frozen_fingerprints(&self) -> Vec<(u64, [u8; 32])> {
        self.frozen_layers()
            .into_iter()
            .map(|layer| {
                let m = layer.materialize();
                let mut h = Sha256::new();
                h.update((m.rows() as u64).to_le_bytes());
                h.update((m.cols() as u64).to_le_bytes());
                h.update(m.entries().iter().map(|e| e.as_i8() as u8).collect::<Vec<u8>>());
                (layer.spec().layer_tag, h.finalize().into())
            })
            .collect()
    }
}

impl Parameterized for Network {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        self.prologue.collect_params(&format!("{prefix}prologue."), out);
        for (b, block) in self.blocks.iter_mut().enumerate() {
            block.collect_params(&format!("{prefix}block{b}."), out);
        }
        self.epilogue.collect_params(&format!("{prefix}epilogue."), out);
        self.classifier.collect_params(&format!("{prefix}classifier."), out);
    }
}

/// Mean softmax cross-entropy over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f32,
    /// `d loss / d logits`.
    pub grad: Vec<f32>,
    pub correct: usize,
}

/// Log-sum-exp runs in `f64`. Predictions break ties towards the lower class.
pub fn softmax_cross_entropy(logits: &[f32], labels: &[usize], classes: usize) -> Result<LossOutput> {
    if logits.len() != labels.len() * classes {
        return Err(Error::shape(format!(
            "{} logits for {} labels of {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    let batch = labels.len();
    let mut grad = vec![0.0f32; logits.len()];
    let mut loss = 0.0f64;
    let mut correct = 0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::shape(format!("label {label} out of range for {classes} classes")));
        }
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[label] as f64;
        let pred = argmax(row);
        correct += usize::from(pred == label);
        for k in 0..classes {
            let p = (row[k] as f64 - lse).exp();
            let onehot = if k == label { 1.0 } else { 0.0 };
            grad[b * classes + k] = ((p - onehot) / batch as f64) as f32;
        }
    }
    Ok(LossOutput { loss: (loss / batch as f64) as f32, grad, correct })
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}
