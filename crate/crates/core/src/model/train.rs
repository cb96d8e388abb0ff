use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::network::softmax_cross_entropy;
use super::{count_params, make_synthetic, ModelConfig, Network, SyntheticDataset, TrainConfig};
use crate::tcsconv::Parameterized;
use crate::weightgen::{mix64, stream_word};
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 0x5487_F1E0_0DE2_0004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub split: Split,
    pub loss: f32,
    pub accuracy: f64,
}

/// One row per epoch and split, in training order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsHistory {
    pub rows: Vec<EpochMetrics>,
}

impl MetricsHistory {
    pub const CSV_HEADER: &'static str = "epoch,split,loss,accuracy";

    pub fn last(&self, split: Split) -> Option<&EpochMetrics> {
        self.rows.iter().rev().find(|r| r.split == split)
    }

    pub fn final_accuracy(&self, split: Split) -> Option<f64> {
        self.last(split).map(|r| r.accuracy)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{},{},{:.6},{:.6}", r.epoch, r.split, r.loss, r.accuracy)?;
        }
        Ok(())
    }
}

/// Visiting order of `indices` in `epoch`, a Fisher-Yates shuffle keyed by
/// the data seed.
pub fn epoch_order(indices: &[usize], data_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = indices.to_vec();
    let seed = mix64(data_seed ^ SHUFFLE_STREAM) ^ epoch as u64;
    for i in (1..order.len()).rev() {
        let j = (stream_word(seed, i as u64) % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Mean loss and accuracy with batch norm in inference mode.
pub fn evaluate(
    net: &mut Network,
    data: &SyntheticDataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<(f32, f64)> {
    if indices.is_empty() {
        return Err(Error::config("cannot evaluate on an empty split"));
    }
    let mut loss = 0.0f64;
    let mut correct = 0;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(chunk);
        let (logits, _) = net.forward(&x, false)?;
        let out = softmax_cross_entropy(&logits, &labels, net.num_classes())?;
        loss += out.loss as f64 * chunk.len() as f64;
        correct += out.correct;
    }
    Ok(((loss / indices.len() as f64) as f32, correct as f64 / indices.len() as f64))
}

/// SGD with heavy-ball momentum: `v <- mu v + g`, `p <- p - lr v`.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    lr: f32,
    momentum: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32) -> Self {
        Sgd { lr, momentum, velocity: Vec::new() }
    }

    pub fn step<P: Parameterized>(&mut self, model: &mut P) {
        let mut params = Vec::new();
        model.collect_params("", &mut params);
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        }
        for (p, v) in params.into_iter().zip(self.velocity.iter_mut()) {
            for ((x, g), vel) in p.value.iter_mut().zip(p.grad.iter()).zip(v.iter_mut()) {
                *vel = self.momentum * *vel + g;
                *x -= self.lr * *vel;
            }
        }
    }
}

/// Trains `net` on the dataset's training split and records train and
/// validation metrics after every epoch.
///
/// Train metrics are averaged over the epoch's mini-batches in training
/// mode; validation metrics use batch norm running statistics. Frozen
/// ternary layers never change.
pub fn train(net: &mut Network, data: &SyntheticDataset, tc: &TrainConfig) -> Result<MetricsHistory> {
    tc.validate()?;
    if data.channels() != net.config().in_channels || data.num_classes() > net.num_classes() {
        return Err(Error::shape(format!(
            "dataset has {} channels and {} classes, network takes {} channels and {} classes",
            data.channels(),
            data.num_classes(),
            net.config().in_channels,
            net.num_classes()
        )));
    }
    let (train_idx, val_idx) = data.split(tc.val_fraction);
    if train_idx.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let mut opt = Sgd::new(tc.learning_rate, tc.momentum);
    let mut history = MetricsHistory::default();
    for epoch in 1..=tc.epochs {
        let order = epoch_order(&train_idx, tc.data_seed, epoch);
        let mut loss_sum = 0.0f64;
        let mut correct = 0;
        for (batch_no, chunk) in order.chunks(tc.batch_size).enumerate() {
            let (x, labels) = data.batch(chunk);
            net.zero_grad();
            let (logits, cache) = net.forward(&x, true)?;
            let out = softmax_cross_entropy(&logits, &labels, net.num_classes())?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: batch_no, loss: out.loss });
            }
            net.backward(&cache, &out.grad)?;
            opt.step(net);
            net.mark_updated();
            loss_sum += out.loss as f64 * chunk.len() as f64;
            correct += out.correct;
        }
        let n = train_idx.len() as f64;
        history.rows.push(EpochMetrics {
            epoch,
            split: Split::Train,
            loss: (loss_sum / n) as f32,
            accuracy: correct as f64 / n,
        });
        if !val_idx.is_empty() {
            let (loss, accuracy) = evaluate(net, data, &val_idx, tc.batch_size)?;
            history.rows.push(EpochMetrics { epoch, split: Split::Val, loss, accuracy });
        }
    }
    Ok(history)
}

/// One entry of a sparsity sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub params_trainable: usize,
    /// Final validation accuracy, or final training accuracy when no
    /// validation split exists.
    pub accuracy: f64,
    #[serde(skip)]
    pub history: MetricsHistory,
}

pub const SWEEP_CSV_HEADER: &str = "t,params_trainable,accuracy";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:.6}", r.t, r.params_trainable, r.accuracy)?;
    }
    Ok(())
}

/// Builds and trains `config` with its threshold replaced by `t`.
pub fn train_at_threshold(config: &ModelConfig, data: &SyntheticDataset, tc: &TrainConfig, t: f64) -> Result<SweepRow> {
    let mut net = Network::build(&config.clone().with_threshold(t))?;
    let params_trainable = count_params(&net).trainable_float_count;
    let history = train(&mut net, data, tc)?;
    let accuracy = history
        .final_accuracy(Split::Val)
        .or_else(|| history.final_accuracy(Split::Train))
        .expect("at least one epoch");
    Ok(SweepRow { t, params_trainable, accuracy, history })
}

/// Trains one model per threshold, all other seeds fixed. Rows come back
/// sorted by `t`. With `jobs > 1` models train concurrently; each run is
/// still sequential and deterministic.
pub fn sparsity_sweep(config: &ModelConfig, t_list: &[f64], tc: &TrainConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if t_list.is_empty() {
        return Err(Error::config("t list is empty"));
    }
    if let Some(t) = t_list.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::config(format!("t must lie in [0, 1], got {t}")));
    }
    let mut ts = t_list.to_vec();
    ts.sort_by(f64::total_cmp);
    let data = make_synthetic(tc, config.in_channels)?;
    if jobs <= 1 {
        return ts.iter().map(|&t| train_at_threshold(config, &data, tc, t)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| ts.par_iter().map(|&t| train_at_threshold(config, &data, tc, t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub params_trainable: usize,
    pub accuracy: f64,
    pub pareto_optimal: bool,
}

/// Flags points that no other point dominates. `q` dominates `p` when it has
/// no more parameters and no less accuracy, and is strictly better in one.
pub fn pareto_flags(points: &[(usize, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)));
    let mut flags = vec![false; points.len()];
    let mut best_smaller = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let params = points[order[i]].0;
        let group_best = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == params {
            let acc = points[order[j]].1;
            flags[order[j]] = acc == group_best && acc > best_smaller;
            j += 1;
        }
        best_smaller = best_smaller.max(group_best);
        i = j;
    }
    flags
}

/// Pairs each configuration's trainable parameter count with its accuracy.
pub fn pareto_report(configs: &[ModelConfig], accuracies: &[f64]) -> Result<Vec<ParetoPoint>> {
    if configs.len() != accuracies.len() {
        return Err(Error::config(format!("{} configs but {} results", configs.len(), accuracies.len())));
    }
    let points = configs
        .iter()
        .zip(accuracies)
        .map(|(c, &a)| Ok((count_params(&Network::build(c)?).trainable_float_count, a)))
        .collect::<Result<Vec<_>>>()?;
    Ok(pareto_flags(&points)
        .into_iter()
        .zip(points)
        .map(|(f, (p, a))| ParetoPoint { params_trainable: p, accuracy: a, pareto_optimal: f })
        .collect())
}
