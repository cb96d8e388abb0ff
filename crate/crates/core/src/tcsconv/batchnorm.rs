use super::{Param, Parameterized, Tensor};
use crate::{Error, Result};

pub const DEFAULT_EPS: f32 = 1e-5;
pub const DEFAULT_MOMENTUM: f32 = 0.1;

/// Per-channel batch normalization over all `(batch, time)` positions.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    channels: usize,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    pub momentum: f32,
    pub grad_gamma: Vec<f32>,
    pub grad_beta: Vec<f32>,
}

/// What the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f32>,
    training: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self::with_hyper(channels, DEFAULT_EPS, DEFAULT_MOMENTUM)
    }

    pub fn with_hyper(channels: usize, eps: f32, momentum: f32) -> Self {
        BatchNorm {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps,
            momentum,
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Normalizes `x`. Training mode uses batch statistics and updates the
    /// running estimates; inference mode uses the running estimates.
    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<(Tensor, BnCache)> {
        if x.channels() != self.channels {
            return Err(Error::shape(format!(
                "batch norm has {} channels, input has {}",
                self.channels,
                x.channels()
            )));
        }
        let n = x.batch() * x.time();
        if training && n < 2 {
            return Err(Error::shape("batch norm in training mode needs batch * time >= 2"));
        }
        let mut x_hat = Tensor::zeros(x.batch(), self.channels, x.time());
        let mut y = Tensor::zeros(x.batch(), self.channels, x.time());
        let mut inv_std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let (mean, var) = if training {
                let mut sum = 0.0f64;
                for b in 0..x.batch() {
                    sum += x.lane(b, c).iter().map(|&v| v as f64).sum::<f64>();
                }
                let mean = sum / n as f64;
                let mut sq = 0.0f64;
                for b in 0..x.batch() {
                    sq += x.lane(b, c).iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>();
                }
                let var = sq / n as f64;
                let m = self.momentum as f64;
                let unbiased = sq / (n - 1) as f64;
                self.running_mean[c] = ((1.0 - m) * self.running_mean[c] as f64 + m * mean) as f32;
                self.running_var[c] = ((1.0 - m) * self.running_var[c] as f64 + m * unbiased) as f32;
                (mean as f32, var as f32)
            } else {
                (self.running_mean[c], self.running_var[c])
            };
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = istd;
            let (g, bt) = (self.gamma[c], self.beta[c]);
            for b in 0..x.batch() {
                let src = x.lane(b, c);
                let xh = x_hat.lane_mut(b, c);
                for (h, &v) in xh.iter_mut().zip(src) {
                    *h = (v - mean) * istd;
                }
                let xh = x_hat.lane(b, c);
                for (o, &h) in y.lane_mut(b, c).iter_mut().zip(xh) {
                    *o = g * h + bt;
                }
            }
        }
        Ok((y, BnCache { x_hat, inv_std, training }))
    }

    /// Returns `dx` and adds the `gamma`/`beta` gradients.
    pub fn backward(&mut self, cache: &BnCache, dy: &Tensor) -> Result<Tensor> {
        cache.x_hat.same_shape(dy)?;
        let n = (dy.batch() * dy.time()) as f64;
        let mut dx = Tensor::zeros(dy.batch(), self.channels, dy.time());
        for c in 0..self.channels {
            let (mut sum_dy, mut sum_dy_xh) = (0.0f64, 0.0f64);
            for b in 0..dy.batch() {
                for (&g, &h) in dy.lane(b, c).iter().zip(cache.x_hat.lane(b, c)) {
                    sum_dy += g as f64;
                    sum_dy_xh += g as f64 * h as f64;
                }
            }
            self.grad_beta[c] += sum_dy as f32;
            self.grad_gamma[c] += sum_dy_xh as f32;
            let scale = self.gamma[c] * cache.inv_std[c];
            for b in 0..dy.batch() {
                let up = dy.lane(b, c);
                let xh = cache.x_hat.lane(b, c);
                let out = dx.lane_mut(b, c);
                if cache.training {
                    let (mean_dy, mean_dy_xh) = ((sum_dy / n) as f32, (sum_dy_xh / n) as f32);
                    for ((o, &g), &h) in out.iter_mut().zip(up).zip(xh) {
                        *o = scale * (g - mean_dy - h * mean_dy_xh);
                    }
                } else {
                    for (o, &g) in out.iter_mut().zip(up) {
                        *o = scale * g;
                    }
                }
            }
        }
        Ok(dx)
    }
}

impl Parameterized for BatchNorm {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<Param<'a>>) {
        out.push(Param { name: format!("{prefix}gamma"), value: &mut self.gamma, grad: &mut self.grad_gamma });
        out.push(Param { name: format!("{prefix}beta"), value: &mut self.beta, grad: &mut self.grad_beta });
    }
}
