use crate::{Error, Result};

/// Dense `f32` activations of shape `[batch, channels, time]`, batch-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(batch: usize, channels: usize, time: usize) -> Self {
        Tensor { shape: [batch, channels, time], data: vec![0.0; batch * channels * time] }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "buffer of {} values does not fit shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor by evaluating `f(b, c, t)` for every position.
    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let [b, c, t] = shape;
        let mut data = Vec::with_capacity(b * c * t);
        for i in 0..b {
            for j in 0..c {
                for k in 0..t {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn time(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize) -> f32 {
        self.data[(b * self.shape[1] + c) * self.shape[2] + t]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: f32) {
        let i = (b * self.shape[1] + c) * self.shape[2] + t;
        self.data[i] = v;
    }

    /// The `[channels, time]` slab of batch element `b`.
    #[inline]
    pub fn sample(&self, b: usize) -> &[f32] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn sample_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.shape[1] * self.shape[2];
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Time series of channel `c` in batch element `b`.
    #[inline]
    pub fn lane(&self, b: usize, c: usize) -> &[f32] {
        let t = self.shape[2];
        let start = (b * self.shape[1] + c) * t;
        &self.data[start..start + t]
    }

    #[inline]
    pub fn lane_mut(&mut self, b: usize, c: usize) -> &mut [f32] {
        let t = self.shape[2];
        let start = (b * self.shape[1] + c) * t;
        &mut self.data[start..start + t]
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
