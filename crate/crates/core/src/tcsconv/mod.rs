//! Layers of a time-channel separable residual block.
//!
//! A block repeats `depthwise -> pointwise -> batch norm -> ReLU` `M` times.
//! The skip branch is added to the last batch-norm output before the final
//! ReLU. Pointwise layers are either trainable float matrices or frozen
//! random ternary matrices; the latter receive no weight gradient and push
//! input gradients through the transposed ternary kernel.
//!
//! Every layer has a hand-written backward pass. Gradients accumulate into
//! per-layer buffers in a fixed order, so a training step is deterministic.

mod batchnorm;
mod block;
mod depthwise;
mod pointwise;
mod tensor;

pub use batchnorm::{BatchNorm, BnCache, DEFAULT_EPS, DEFAULT_MOMENTUM};
pub use block::{Block, BlockCache, BlockConfig};
pub(crate) use block::init_seed;
pub use depthwise::DepthwiseConv;
pub use pointwise::{FloatPointwise, FrozenTernary, PointwiseLayer, PointwiseMode, SkipLink, SkipMode};
pub use tensor::Tensor;

use crate::weightgen::{stream_word, word_to_uniform};

/// A trainable tensor and its gradient buffer.
pub struct Param<'a> {
    pub name: String,
    pub value: &'a mut [f32],
    pub grad: &'a mut [f32],
}

/// Layers that own trainable tensors.
pub trait Parameterized {
    /// Appends every trainable tensor, in a fixed order, to `out`.
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>);

    fn zero_grad(&mut self) {
        let mut params = Vec::new();
        self.collect_params("", &mut params);
        for p in params {
            p.grad.fill(0.0);
        }
    }

    fn trainable_count(&mut self) -> usize {
        let mut params = Vec::new();
        self.collect_params("", &mut params);
        params.iter().map(|p| p.value.len()).sum()
    }
}

/// Fills `out` with uniform values on `[-bound, bound)` drawn from `seed`.
pub fn uniform_fill(seed: u64, bound: f32, out: &mut [f32]) {
    for (i, v) in out.iter_mut().enumerate() {
        *v = word_to_uniform(stream_word(seed, i as u64)) as f32 * bound;
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("shape preserved")
}

/// Gradient of ReLU given its input `x`; zero where `x <= 0`.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> crate::Result<Tensor> {
    x.same_shape(dy)?;
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn random_tensor(seed: u64, shape: [usize; 3], scale: f32) -> Tensor {
        let mut data = vec![0.0; shape.iter().product()];
        uniform_fill(seed, scale, &mut data);
        Tensor::from_vec(shape, data).unwrap()
    }

    pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(&x, &y)| x as f64 * y as f64).sum()
    }

    /// Relative error with a unit floor, so tiny gradients are compared
    /// absolutely.
    pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn relu_all_negative_and_all_positive() {
        let neg = Tensor::from_vec([1, 2, 2], vec![-1.0, -0.5, -3.0, -0.1]).unwrap();
        let g = Tensor::from_vec([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        assert!(relu_backward(&neg, &g).unwrap().data().iter().all(|&v| v == 0.0));
        let pos = Tensor::from_vec([1, 2, 2], vec![1.0, 0.5, 3.0, 0.1]).unwrap();
        assert_eq!(relu(&pos), pos);
        assert_eq!(relu_backward(&pos, &g).unwrap(), g);
    }

    #[test]
    fn relu_finite_differences() {
        let x = random_tensor(1, [2, 3, 8], 2.0);
        let r = random_tensor(2, [2, 3, 8], 1.0);
        let grad = relu_backward(&x, &r).unwrap();
        let h = 1e-3f32;
        for i in 0..x.data().len() {
            if x.data()[i].abs() <= 1e-2 {
                continue;
            }
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let num = (dot(&relu(&xp), &r) - dot(&relu(&xm), &r)) / (2.0 * h as f64);
            assert!(rel_err(grad.data()[i] as f64, num) < 1e-3);
        }
    }
}
