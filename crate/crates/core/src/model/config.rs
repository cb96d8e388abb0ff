use serde::{Deserialize, Serialize};

use crate::tcsconv::{PointwiseMode, SkipMode};
use crate::weightgen::Generator;
use crate::{Error, Result};

fn default_generator() -> Generator {
    Generator::SequentialStream
}

fn default_eps() -> f32 {
    crate::tcsconv::DEFAULT_EPS
}

fn default_momentum() -> f32 {
    crate::tcsconv::DEFAULT_MOMENTUM
}

/// Shape and weight policy of an `N x M x W` network.
///
/// ```
/// use rtconv::model::ModelConfig;
///
/// let cfg: ModelConfig = serde_json::from_str(r#"{
///     "N": 2, "M": 1, "W": 16, "in_channels": 4, "num_classes": 3,
///     "K0": 5, "K": [5, 7], "K_e": 3,
///     "pointwise_mode": ["float", "ternary"],
///     "skip_mode": ["trained", "identity"],
///     "t": 0.5, "seed": 1
/// }"#).unwrap();
/// cfg.validate().unwrap();
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Residual blocks.
    #[serde(rename = "N")]
    pub blocks: usize,
    /// Separable sub-layers per block.
    #[serde(rename = "M")]
    pub repeats: usize,
    /// Channels inside the residual stack.
    #[serde(rename = "W")]
    pub width: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    #[serde(rename = "K0")]
    pub prologue_kernel: usize,
    /// One depthwise kernel length per block.
    #[serde(rename = "K")]
    pub kernels: Vec<usize>,
    #[serde(rename = "K_e")]
    pub epilogue_kernel: usize,
    pub pointwise_mode: Vec<PointwiseMode>,
    pub skip_mode: Vec<SkipMode>,
    #[serde(rename = "t")]
    pub threshold: f64,
    pub seed: u64,
    #[serde(default = "default_generator")]
    pub generator: Generator,
    #[serde(default = "default_eps")]
    pub bn_eps: f32,
    #[serde(default = "default_momentum")]
    pub bn_momentum: f32,
}

impl ModelConfig {
    /// Every block uses the same kernel and the same pointwise and skip modes.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        blocks: usize,
        repeats: usize,
        width: usize,
        in_channels: usize,
        num_classes: usize,
        kernel: usize,
        pointwise: PointwiseMode,
        skip: SkipMode,
        threshold: f64,
        seed: u64,
    ) -> Self {
        ModelConfig {
            blocks,
            repeats,
            width,
            in_channels,
            num_classes,
            prologue_kernel: kernel,
            kernels: vec![kernel; blocks],
            epilogue_kernel: kernel,
            pointwise_mode: vec![pointwise; blocks],
            skip_mode: vec![skip; blocks],
            threshold,
            seed,
            generator: default_generator(),
            bn_eps: default_eps(),
            bn_momentum: default_momentum(),
        }
    }

    /// Switches the pointwise layers of the given blocks.
    pub fn with_pointwise(mut self, blocks: impl IntoIterator<Item = usize>, mode: PointwiseMode) -> Self {
        for b in blocks {
            self.pointwise_mode[b] = mode;
        }
        self
    }

    pub fn with_skip(mut self, blocks: impl IntoIterator<Item = usize>, mode: SkipMode) -> Self {
        for b in blocks {
            self.skip_mode[b] = mode;
        }
        self
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("N", self.blocks),
            ("M", self.repeats),
            ("W", self.width),
            ("in_channels", self.in_channels),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        for (name, len) in [
            ("K", self.kernels.len()),
            ("pointwise_mode", self.pointwise_mode.len()),
            ("skip_mode", self.skip_mode.len()),
        ] {
            if len != self.blocks {
                return Err(Error::config(format!("{name} lists {len} entries for {} blocks", self.blocks)));
            }
        }
        for k in std::iter::once(self.prologue_kernel).chain(self.kernels.iter().copied()).chain([self.epilogue_kernel]) {
            if k == 0 || k % 2 == 0 {
                return Err(Error::config(format!("kernel sizes must be odd, got {k}")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!("t must lie in [0, 1], got {}", self.threshold)));
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::config("bn_eps must be positive and bn_momentum in [0, 1]"));
        }
        Ok(())
    }

    /// Layer tag of the prologue pointwise layer, the first matrix layer.
    pub const PROLOGUE_TAG: u64 = 0;

    /// Tag of the first pointwise layer of block `b`. Each block owns `M + 1`
    /// consecutive tags: its sub-layers, then its skip matrix.
    pub fn block_tag(&self, b: usize) -> u64 {
        1 + (b * (self.repeats + 1)) as u64
    }

    pub fn epilogue_tag(&self) -> u64 {
        self.block_tag(self.blocks)
    }

    pub fn classifier_tag(&self) -> u64 {
        self.epilogue_tag() + 1
    }
}

fn is_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {v}")))
    }
}

fn default_val_fraction() -> f64 {
    0.2
}

fn default_amplitude() -> f32 {
    2.0
}

/// Optimiser and dataset settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub data_seed: u64,
    pub dataset_size: usize,
    /// Sequence length.
    #[serde(rename = "T")]
    pub seq_len: usize,
    pub num_classes: usize,
    /// Share of the dataset held out for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Template amplitude over unit-variance noise.
    #[serde(default = "default_amplitude")]
    pub amplitude: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            data_seed: 2024,
            dataset_size: 2048,
            seq_len: 64,
            num_classes: 8,
            val_fraction: default_val_fraction(),
            amplitude: default_amplitude(),
        }
    }
}

impl TrainConfig {
    /// Learning rate and momentum may be zero; every count must be positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("dataset_size", self.dataset_size),
            ("T", self.seq_len),
            ("num_classes", self.num_classes),
        ] {
            is_positive(name, v as f64)?;
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction)));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config("amplitude must be finite and >= 0"));
        }
        Ok(())
    }
}
