//! Multiplication-free application of ternary matrices.
//!
//! Every output row is `sum(x[I+]) - sum(x[I-])`. All representations follow
//! one canonical accumulation order so that their results agree bit for bit:
//! the `+1` terms are summed into a zero-initialized accumulator in ascending
//! column order, the `-1` terms into a second one the same way, and the row
//! ends with a single subtraction. The transposed product fills the two
//! accumulators of each output column by scanning rows in ascending order.
//!
//! Additions are counted as one per accumulated term plus one for the final
//! subtraction, so a row with `p` positive and `q` negative entries costs
//! `p + q + 1` additions and no multiplications.

mod repr;

pub use repr::{DenseTernary, IndexPairMatrix, OnTheFly, PackedBitplanes};

use rayon::prelude::*;
use serde::Serialize;

use crate::tcsconv::Tensor;
use crate::{Error, Result};

/// Arithmetic and memory traffic recorded by a kernel call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub multiplications: u64,
    pub additions: u64,
    pub weight_bytes_read: u64,
}

impl OpCounter {
    pub fn merge(&mut self, other: &OpCounter) {
        self.multiplications += other.multiplications;
        self.additions += other.additions;
        self.weight_bytes_read += other.weight_bytes_read;
    }
}

/// A ternary matrix that can be applied to panels of activations.
///
/// A panel holds `width` independent vectors interleaved column-wise:
/// element `k` of input channel `c` sits at `x[c * width + k]`. This is the
/// `[channels, time]` layout of one batch element, so a 1x1-convolution is
/// one panel call per batch element and `matvec` is a panel of width 1.
pub trait TernaryOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `y = M x` for a panel. `x` has `cols * width` values, `y` `rows * width`.
    fn apply_panel(&self, x: &[f32], width: usize, y: &mut [f32], counter: &mut OpCounter);

    /// `out = M^T g` for a panel. `g` has `rows * width` values, `out` `cols * width`.
    fn apply_transpose_panel(&self, g: &[f32], width: usize, out: &mut [f32], counter: &mut OpCounter);

    /// Number of nonzero entries.
    fn nnz(&self) -> usize;
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// `y = M x`, multiplication-free.
pub fn matvec<M: TernaryOperator + ?Sized>(m: &M, x: &[f32], counter: &mut OpCounter) -> Result<Vec<f32>> {
    check_len("input vector", x.len(), m.cols())?;
    let mut y = vec![0.0; m.rows()];
    m.apply_panel(x, 1, &mut y, counter);
    Ok(y)
}

/// `M^T g`, multiplication-free. Bit-identical to `matvec` on the explicit
/// transpose.
pub fn matvec_transpose<M: TernaryOperator + ?Sized>(
    m: &M,
    g: &[f32],
    counter: &mut OpCounter,
) -> Result<Vec<f32>> {
    check_len("gradient vector", g.len(), m.rows())?;
    let mut out = vec![0.0; m.cols()];
    m.apply_transpose_panel(g, 1, &mut out, counter);
    Ok(out)
}

/// 1x1-convolution: `matvec` at every `(batch, time)` position of `x`.
pub fn pointwise_apply<M: TernaryOperator + ?Sized>(
    m: &M,
    x: &Tensor,
    counter: &mut OpCounter,
) -> Result<Tensor> {
    if x.channels() != m.cols() {
        return Err(Error::shape(format!(
            "pointwise layer expects {} input channels, got {}",
            m.cols(),
            x.channels()
        )));
    }
    let mut y = Tensor::zeros(x.batch(), m.rows(), x.time());
    for b in 0..x.batch() {
        m.apply_panel(x.sample(b), x.time(), y.sample_mut(b), counter);
    }
    Ok(y)
}

/// [`pointwise_apply`] with batch elements spread over the rayon pool.
///
/// Each output vector keeps the canonical order, so the result is identical
/// to the sequential call; counters are merged in batch order.
pub fn pointwise_apply_par<M: TernaryOperator + ?Sized>(
    m: &M,
    x: &Tensor,
    counter: &mut OpCounter,
) -> Result<Tensor> {
    if x.channels() != m.cols() {
        return Err(Error::shape(format!(
            "pointwise layer expects {} input channels, got {}",
            m.cols(),
            x.channels()
        )));
    }
    let mut y = Tensor::zeros(x.batch(), m.rows(), x.time());
    let per_out = m.rows() * x.time();
    let counters: Vec<OpCounter> = y
        .data_mut()
        .par_chunks_mut(per_out)
        .enumerate()
        .map(|(b, out)| {
            let mut c = OpCounter::default();
            m.apply_panel(x.sample(b), x.time(), out, &mut c);
            c
        })
        .collect();
    for c in &counters {
        counter.merge(c);
    }
    Ok(y)
}

/// Input gradient of a 1x1-convolution: `M^T dy` at every position.
pub fn pointwise_apply_transpose<M: TernaryOperator + ?Sized>(
    m: &M,
    dy: &Tensor,
    counter: &mut OpCounter,
) -> Result<Tensor> {
    if dy.channels() != m.rows() {
        return Err(Error::shape(format!(
            "pointwise gradient expects {} channels, got {}",
            m.rows(),
            dy.channels()
        )));
    }
    let mut dx = Tensor::zeros(dy.batch(), m.cols(), dy.time());
    for b in 0..dy.batch() {
        m.apply_transpose_panel(dy.sample(b), dy.time(), dx.sample_mut(b), counter);
    }
    Ok(dx)
}

/// Float oracle: ternary entries cast to `f32` and multiplied in, with the
/// products split into the positive and negative partial sums in the
/// canonical order. Records one multiplication per entry.
pub fn reference_float_matvec(m: &DenseTernary, x: &[f32], counter: &mut OpCounter) -> Result<Vec<f32>> {
    check_len("input vector", x.len(), m.cols())?;
    let weights = m.to_f32();
    let mut y = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let (mut pos, mut neg) = (0.0f32, 0.0f32);
        for (c, &w) in weights[r * m.cols()..(r + 1) * m.cols()].iter().enumerate() {
            let prod = w * x[c];
            if w > 0.0 {
                pos += prod;
            } else if w < 0.0 {
                neg -= prod;
            }
        }
        counter.multiplications += m.cols() as u64;
        counter.additions += m.cols() as u64;
        counter.weight_bytes_read += 4 * m.cols() as u64;
        y.push(pos - neg);
    }
    Ok(y)
}

/// Additions a canonical kernel performs for one vector through `m`.
pub fn canonical_additions(nnz: usize, rows: usize) -> u64 {
    (nnz + rows) as u64
}
