use super::{
    relu, relu_backward, BatchNorm, BnCache, DepthwiseConv, FloatPointwise, FrozenTernary, Param,
    Parameterized, PointwiseLayer, PointwiseMode, SkipLink, SkipMode, Tensor,
};
use crate::linalg::OpCounter;
use crate::weightgen::{mix64, stream_word, Generator, WeightSpec};
use crate::{Error, Result};

/// Construction parameters of one residual block.
#[derive(Debug, Clone)]
pub struct BlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `M`, the number of separable sub-layers.
    pub repeats: usize,
    pub kernel: usize,
    pub pointwise: PointwiseMode,
    pub skip: SkipMode,
    pub threshold: f64,
    pub generator: Generator,
    pub seed: u64,
    /// Tag of the first pointwise layer. Sub-layer `i` uses `first_layer_tag + i`,
    /// the skip matrix `first_layer_tag + repeats`.
    pub first_layer_tag: u64,
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

/// Seed of a float tensor, derived from the run seed, the layer tag and a slot.
pub(crate) fn init_seed(seed: u64, layer_tag: u64, slot: u64) -> u64 {
    stream_word(seed ^ 0x05EE_D0FF_10A7, mix64(layer_tag) ^ slot)
}

#[derive(Debug, Clone)]
struct SubLayer {
    depthwise: DepthwiseConv,
    pointwise: PointwiseLayer,
    bn: BatchNorm,
}

#[derive(Debug, Clone)]
pub struct Block {
    in_channels: usize,
    out_channels: usize,
    subs: Vec<SubLayer>,
    skip: SkipLink,
    skip_bn: Option<BatchNorm>,
    version: u64,
}

#[derive(Debug, Clone)]
struct SubCache {
    input: Tensor,
    depthwise_out: Tensor,
    bn: BnCache,
    /// Batch-norm output (plus the skip, for the last sub-layer): the ReLU input.
    pre_activation: Tensor,
}

/// Intermediates of one forward pass, consumed by [`Block::backward`].
#[derive(Debug, Clone)]
pub struct BlockCache {
    version: u64,
    input: Tensor,
    subs: Vec<SubCache>,
    skip_bn: Option<BnCache>,
}

impl BlockCache {
    /// Inputs of every ReLU in the block, in forward order.
    pub fn relu_inputs(&self) -> impl Iterator<Item = &Tensor> {
        self.subs.iter().map(|s| &s.pre_activation)
    }
}

impl Block {
    pub fn new(cfg: &BlockConfig) -> Result<Self> {
        if cfg.repeats == 0 {
            return Err(Error::config("a block needs at least one sub-layer"));
        }
        if cfg.skip == SkipMode::Identity && cfg.in_channels != cfg.out_channels {
            return Err(Error::config(format!(
                "identity skip needs equal channel counts, got {} -> {}",
                cfg.in_channels, cfg.out_channels
            )));
        }
        let mut subs = Vec::with_capacity(cfg.repeats);
        for i in 0..cfg.repeats {
            let tag = cfg.first_layer_tag + i as u64;
            let c_in = if i == 0 { cfg.in_channels } else { cfg.out_channels };
            let depthwise = DepthwiseConv::new(c_in, cfg.kernel)?.init(init_seed(cfg.seed, tag, 1));
            let pointwise = match cfg.pointwise {
                PointwiseMode::Float => PointwiseLayer::TrainableFloat(
                    FloatPointwise::new(cfg.out_channels, c_in).init(init_seed(cfg.seed, tag, 0)),
                ),
                PointwiseMode::Ternary => PointwiseLayer::FrozenTernary(FrozenTernary::new(WeightSpec::new(
                    cfg.seed,
                    tag,
                    cfg.out_channels,
                    c_in,
                    cfg.threshold,
                    cfg.generator,
                )?)?),
            };
            let bn = BatchNorm::with_hyper(cfg.out_channels, cfg.bn_eps, cfg.bn_momentum);
            subs.push(SubLayer { depthwise, pointwise, bn });
        }
        let skip_tag = cfg.first_layer_tag + cfg.repeats as u64;
        let skip = match cfg.skip {
            SkipMode::Trained => SkipLink::TrainedFloat(
                FloatPointwise::new(cfg.out_channels, cfg.in_channels).init(init_seed(cfg.seed, skip_tag, 0)),
            ),
            SkipMode::Ternary => SkipLink::RandomTernary(FrozenTernary::new(WeightSpec::new(
                cfg.seed,
                skip_tag,
                cfg.out_channels,
                cfg.in_channels,
                cfg.threshold,
                cfg.generator,
            )?)?),
            SkipMode::Identity => SkipLink::Identity,
            SkipMode::None => SkipLink::None,
        };
        let skip_bn = (cfg.skip != SkipMode::None)
            .then(|| BatchNorm::with_hyper(cfg.out_channels, cfg.bn_eps, cfg.bn_momentum));
        Ok(Block { in_channels: cfg.in_channels, out_channels: cfg.out_channels, subs, skip, skip_bn, version: 0 })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn repeats(&self) -> usize {
        self.subs.len()
    }

    pub fn skip(&self) -> &SkipLink {
        &self.skip
    }

    pub fn pointwise(&self, i: usize) -> &PointwiseLayer {
        &self.subs[i].pointwise
    }

    pub fn depthwise(&self, i: usize) -> &DepthwiseConv {
        &self.subs[i].depthwise
    }

    pub fn depthwise_mut(&mut self, i: usize) -> &mut DepthwiseConv {
        &mut self.subs[i].depthwise
    }

    pub fn pointwise_mut(&mut self, i: usize) -> &mut PointwiseLayer {
        &mut self.subs[i].pointwise
    }

    pub fn bn(&self, i: usize) -> &BatchNorm {
        &self.subs[i].bn
    }

    pub fn skip_bn(&self) -> Option<&BatchNorm> {
        self.skip_bn.as_ref()
    }

    pub fn bn_mut(&mut self, i: usize) -> &mut BatchNorm {
        &mut self.subs[i].bn
    }

    pub fn skip_bn_mut(&mut self) -> Option<&mut BatchNorm> {
        self.skip_bn.as_mut()
    }

    /// Every frozen ternary layer of the block, sub-layers first.
    pub fn frozen_layers(&self) -> Vec<&FrozenTernary> {
        let mut out: Vec<&FrozenTernary> = self
            .subs
            .iter()
            .filter_map(|s| match &s.pointwise {
                PointwiseLayer::FrozenTernary(t) => Some(t),
                PointwiseLayer::TrainableFloat(_) => None,
            })
            .collect();
        if let SkipLink::RandomTernary(t) = &self.skip {
            out.push(t);
        }
        out
    }

    /// Sum of the operation counters of all frozen ternary layers.
    pub fn ternary_ops(&self) -> OpCounter {
        let mut total = OpCounter::default();
        for t in self.frozen_layers() {
            total.merge(&t.counter);
        }
        total
    }

    pub fn reset_counters(&mut self) {
        for sub in self.subs.iter_mut() {
            if let PointwiseLayer::FrozenTernary(t) = &mut sub.pointwise {
                t.counter = OpCounter::default();
            }
        }
        if let SkipLink::RandomTernary(t) = &mut self.skip {
            t.counter = OpCounter::default();
        }
    }

    /// Invalidates outstanding caches. Call after changing any parameter.
    pub fn mark_updated(&mut self) {
        self.version += 1;
    }

    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<(Tensor, BlockCache)> {
        if x.channels() != self.in_channels {
            return Err(Error::shape(format!(
                "block expects {} channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let last = self.subs.len() - 1;
        let mut caches = Vec::with_capacity(self.subs.len());
        let mut h = x.clone();
        for sub in self.subs.iter_mut() {
            let d = sub.depthwise.forward(&h)?;
            let p = sub.pointwise.forward(&d)?;
            let (z, bn) = sub.bn.forward(&p, training)?;
            caches.push(SubCache { input: h, depthwise_out: d, bn, pre_activation: z });
            h = relu(&caches.last().unwrap().pre_activation);
        }
        let mut skip_bn_cache = None;
        if let Some(s) = self.skip.forward(x)? {
            let bn = self.skip_bn.as_mut().expect("skip links other than None carry a batch norm");
            let (s, c) = bn.forward(&s, training)?;
            caches[last].pre_activation.add_assign(&s)?;
            skip_bn_cache = Some(c);
        }
        let y = relu(&caches[last].pre_activation);
        Ok((y, BlockCache { version: self.version, input: x.clone(), subs: caches, skip_bn: skip_bn_cache }))
    }

    /// Returns `dx` and accumulates gradients of every trainable tensor.
    /// Frozen ternary layers only propagate the input gradient.
    pub fn backward(&mut self, cache: &BlockCache, dy: &Tensor) -> Result<Tensor> {
        if cache.version != self.version || cache.subs.len() != self.subs.len() {
            return Err(Error::StaleCache(format!(
                "cache from version {} used on block version {}",
                cache.version, self.version
            )));
        }
        let last = self.subs.len() - 1;
        let mut g = relu_backward(&cache.subs[last].pre_activation, dy)?;

        let mut dx_skip = None;
        if let (Some(bn), Some(c)) = (self.skip_bn.as_mut(), cache.skip_bn.as_ref()) {
            let ds = bn.backward(c, &g)?;
            dx_skip = self.skip.backward(&cache.input, &ds)?;
        }

        for i in (0..self.subs.len()).rev() {
            let sc = &cache.subs[i];
            if i != last {
                g = relu_backward(&sc.pre_activation, &g)?;
            }
            let sub = &mut self.subs[i];
            let dp = sub.bn.backward(&sc.bn, &g)?;
            let dd = sub.pointwise.backward(&sc.depthwise_out, &dp)?;
            g = sub.depthwise.backward(&sc.input, &dd)?;
        }
        if let Some(s) = dx_skip {
            g.add_assign(&s)?;
        }
        Ok(g)
    }
}

impl Parameterized for Block {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        for (i, sub) in self.subs.iter_mut().enumerate() {
            sub.depthwise.collect_params(&format!("{prefix}sub{i}.depthwise."), out);
            sub.pointwise.collect_params(&format!("{prefix}sub{i}.pointwise."), out);
            sub.bn.collect_params(&format!("{prefix}sub{i}.bn."), out);
        }
        self.skip.collect_params(&format!("{prefix}skip."), out);
        if let Some(bn) = self.skip_bn.as_mut() {
            bn.collect_params(&format!("{prefix}skip_bn."), out);
        }
    }
}
