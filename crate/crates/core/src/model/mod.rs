//! Whole networks: configuration, parameter accounting, a synthetic
//! sequence-classification task, training and sparsity sweeps.
//!
//! A network is a prologue (depthwise conv, float pointwise, batch norm,
//! ReLU), `N` residual blocks of `M` separable sub-layers each, an epilogue
//! of the same shape as the prologue, global average pooling over time and
//! a linear classifier. Every matrix layer owns a layer tag equal to its
//! position in that order, so a layer keeps its tag when other layers change
//! mode.

mod config;
mod data;
mod network;
mod report;
mod train;

pub use config::{ModelConfig, TrainConfig};
pub use data::{class_template, make_synthetic, SyntheticDataset, MAX_CLASSES, TEMPLATE_LEN};
pub use network::{softmax_cross_entropy, Classifier, LossOutput, Network, NetworkCache, Stage};
pub use report::{
    count_params, deepen, deepest_within_budget, LayerKind, LayerParams, ParamReport, FLOAT_BYTES, SPEC_BYTES,
};
pub use train::{
    epoch_order, evaluate, pareto_flags, pareto_report, sparsity_sweep, train, train_at_threshold, write_sweep_csv,
    EpochMetrics, MetricsHistory, ParetoPoint, Sgd, Split, SweepRow, SWEEP_CSV_HEADER,
};
