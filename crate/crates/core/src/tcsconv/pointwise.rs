use serde::{Deserialize, Serialize};

use super::{uniform_fill, Param, Parameterized, Tensor};
use crate::linalg::{pointwise_apply, pointwise_apply_transpose, DenseTernary, IndexPairMatrix, OpCounter};
use crate::weightgen::{generate, WeightSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseMode {
    Float,
    Ternary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipMode {
    Trained,
    Ternary,
    Identity,
    None,
}

/// Trainable `out x in` channel-mixing matrix.
#[derive(Debug, Clone)]
pub struct FloatPointwise {
    rows: usize,
    cols: usize,
    pub weight: Vec<f32>,
    pub grad: Vec<f32>,
}

impl FloatPointwise {
    pub fn new(out_channels: usize, in_channels: usize) -> Self {
        FloatPointwise {
            rows: out_channels,
            cols: in_channels,
            weight: vec![0.0; out_channels * in_channels],
            grad: vec![0.0; out_channels * in_channels],
        }
    }

    pub fn init(mut self, seed: u64) -> Self {
        let bound = (3.0 / self.cols as f32).sqrt();
        uniform_fill(seed, bound, &mut self.weight);
        self
    }

    pub fn out_channels(&self) -> usize {
        self.rows
    }

    pub fn in_channels(&self) -> usize {
        self.cols
    }

    fn check(&self, channels: usize, want: usize, what: &str) -> Result<()> {
        if channels != want {
            return Err(Error::shape(format!("pointwise {what} has {channels} channels, expected {want}")));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x.channels(), self.cols, "input")?;
        let mut y = Tensor::zeros(x.batch(), self.rows, x.time());
        for b in 0..x.batch() {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    let w = self.weight[r * self.cols + c];
                    let src = x.lane(b, c);
                    for (o, &v) in y.lane_mut(b, r).iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        self.check(x.channels(), self.cols, "input")?;
        self.check(dy.channels(), self.rows, "gradient")?;
        let mut dx = Tensor::zeros(x.batch(), self.cols, x.time());
        for b in 0..x.batch() {
            for r in 0..self.rows {
                let up = dy.lane(b, r);
                for c in 0..self.cols {
                    let w = self.weight[r * self.cols + c];
                    let mut g = 0.0f32;
                    for ((d, &u), &v) in dx.lane_mut(b, c).iter_mut().zip(up).zip(x.lane(b, c)) {
                        *d += w * u;
                        g += u * v;
                    }
                    self.grad[r * self.cols + c] += g;
                }
            }
        }
        Ok(dx)
    }
}

impl Parameterized for FloatPointwise {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        out.push(Param { name: format!("{prefix}weight"), value: &mut self.weight, grad: &mut self.grad });
    }
}

/// Constant random ternary matrix. The spec is the source of truth; the
/// index-pair form is a cache that can always be regenerated from it.
#[derive(Debug, Clone)]
pub struct FrozenTernary {
    spec: WeightSpec,
    matrix: IndexPairMatrix,
    /// Work done by this layer since construction.
    pub counter: OpCounter,
}

impl FrozenTernary {
    pub fn new(spec: WeightSpec) -> Result<Self> {
        let dense = generate(&spec)?;
        Ok(FrozenTernary { spec, matrix: IndexPairMatrix::from(&dense), counter: OpCounter::default() })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &IndexPairMatrix {
        &self.matrix
    }

    pub fn materialize(&self) -> DenseTernary {
        self.matrix.to_dense()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        pointwise_apply(&self.matrix, x, &mut self.counter)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        pointwise_apply_transpose(&self.matrix, dy, &mut self.counter)
    }
}

#[derive(Debug, Clone)]
pub enum PointwiseLayer {
    TrainableFloat(FloatPointwise),
    FrozenTernary(FrozenTernary),
}

impl PointwiseLayer {
    pub fn mode(&self) -> PointwiseMode {
        match self {
            PointwiseLayer::TrainableFloat(_) => PointwiseMode::Float,
            PointwiseLayer::FrozenTernary(_) => PointwiseMode::Ternary,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            PointwiseLayer::TrainableFloat(f) => f.forward(x),
            PointwiseLayer::FrozenTernary(t) => t.forward(x),
        }
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        match self {
            PointwiseLayer::TrainableFloat(f) => f.backward(x, dy),
            PointwiseLayer::FrozenTernary(t) => t.backward(dy),
        }
    }
}

impl Parameterized for PointwiseLayer {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        if let PointwiseLayer::TrainableFloat(f) = self {
            f.collect_params(prefix, out);
        }
    }
}

/// The residual connection of a block.
#[derive(Debug, Clone)]
pub enum SkipLink {
    TrainedFloat(FloatPointwise),
    RandomTernary(FrozenTernary),
    Identity,
    None,
}

impl SkipLink {
    pub fn mode(&self) -> SkipMode {
        match self {
            SkipLink::TrainedFloat(_) => SkipMode::Trained,
            SkipLink::RandomTernary(_) => SkipMode::Ternary,
            SkipLink::Identity => SkipMode::Identity,
            SkipLink::None => SkipMode::None,
        }
    }

    /// `None` when the link is absent.
    pub fn forward(&mut self, x: &Tensor) -> Result<Option<Tensor>> {
        Ok(match self {
            SkipLink::TrainedFloat(f) => Some(f.forward(x)?),
            SkipLink::RandomTernary(t) => Some(t.forward(x)?),
            SkipLink::Identity => Some(x.clone()),
            SkipLink::None => None,
        })
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Option<Tensor>> {
        Ok(match self {
            SkipLink::TrainedFloat(f) => Some(f.backward(x, dy)?),
            SkipLink::RandomTernary(t) => Some(t.backward(dy)?),
            SkipLink::Identity => Some(dy.clone()),
            SkipLink::None => None,
        })
    }
}

impl Parameterized for SkipLink {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        if let SkipLink::TrainedFloat(f) = self {
            f.collect_params(prefix, out);
        }
    }
}
