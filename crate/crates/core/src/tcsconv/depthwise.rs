use super::{uniform_fill, Param, Parameterized, Tensor};
use crate::{Error, Result};

/// Per-channel temporal convolution, stride 1, zero "same" padding.
#[derive(Debug, Clone)]
pub struct DepthwiseConv {
    channels: usize,
    kernel: usize,
    /// `[channels, kernel]`
    pub weight: Vec<f32>,
    pub grad: Vec<f32>,
}

impl DepthwiseConv {
    pub fn new(channels: usize, kernel: usize) -> Result<Self> {
        if channels == 0 || kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::config(format!(
                "depthwise conv needs channels >= 1 and an odd kernel, got {channels} and {kernel}"
            )));
        }
        Ok(DepthwiseConv {
            channels,
            kernel,
            weight: vec![0.0; channels * kernel],
            grad: vec![0.0; channels * kernel],
        })
    }

    /// Random init with unit gain per output.
    pub fn init(mut self, seed: u64) -> Self {
        let bound = (3.0 / self.kernel as f32).sqrt();
        uniform_fill(seed, bound, &mut self.weight);
        self
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::shape(format!(
                "depthwise conv has {} channels, input has {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// `y[b,c,t] = sum_k w[c,k] * x[b,c,t+k-p]` with `p = (K-1)/2`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let (k_len, half) = (self.kernel, self.kernel / 2);
        let time = x.time();
        let mut y = Tensor::zeros(x.batch(), self.channels, time);
        for b in 0..x.batch() {
            for c in 0..self.channels {
                let w = &self.weight[c * k_len..(c + 1) * k_len];
                let src = x.lane(b, c);
                let dst = y.lane_mut(b, c);
                for (t, out) in dst.iter_mut().enumerate() {
                    let mut acc = 0.0f32;
                    for (k, &wk) in w.iter().enumerate() {
                        let s = t + k;
                        if s >= half && s - half < time {
                            acc += wk * src[s - half];
                        }
                    }
                    *out = acc;
                }
            }
        }
        Ok(y)
    }

    /// Returns `dx` and adds the weight gradient into `self.grad`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        x.same_shape(dy)?;
        let (k_len, half) = (self.kernel, self.kernel / 2);
        let time = x.time();
        let mut dx = Tensor::zeros(x.batch(), self.channels, time);
        for b in 0..x.batch() {
            for c in 0..self.channels {
                let w = &self.weight[c * k_len..(c + 1) * k_len];
                let g = &mut self.grad[c * k_len..(c + 1) * k_len];
                let src = x.lane(b, c);
                let up = dy.lane(b, c);
                let dst = dx.lane_mut(b, c);
                for (t, &d) in up.iter().enumerate() {
                    for k in 0..k_len {
                        let s = t + k;
                        if s >= half && s - half < time {
                            dst[s - half] += w[k] * d;
                            g[k] += d * src[s - half];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

impl Parameterized for DepthwiseConv {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        out.push(Param { name: format!("{prefix}weight"), value: &mut self.weight, grad: &mut self.grad });
    }
}
