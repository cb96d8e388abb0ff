use super::TrainConfig;
use crate::tcsconv::Tensor;
use crate::weightgen::{mix64, stream_word, word_to_uniform};
use crate::{Error, Result};

/// Length in time steps of every class template.
pub const TEMPLATE_LEN: usize = 9;
/// Largest supported class count.
pub const MAX_CLASSES: usize = 1024;

const TEMPLATE_STREAM: u64 = 0x7E3B_1A7E_5EED_0001;
const OFFSET_STREAM: u64 = 0x0FF5_E7A1_5EED_0002;
const NOISE_STREAM: u64 = 0x9A05_5EED_0003_0003;

/// Template of `class`, laid out `[channel][TEMPLATE_LEN]`, values in `[-1, 1)`.
/// Depends only on the class index and the channel count.
pub fn class_template(class: usize, channels: usize) -> Vec<f32> {
    let seed = mix64(TEMPLATE_STREAM ^ class as u64);
    (0..channels * TEMPLATE_LEN)
        .map(|i| word_to_uniform(stream_word(seed, i as u64)) as f32)
        .collect()
}

/// Standard normal draw from two stream words (Box-Muller, cosine branch).
fn gaussian(seed: u64, index: u64) -> f32 {
    let u1 = ((stream_word(seed, 2 * index) >> 11) + 1) as f64 * (-53f64).exp2();
    let u2 = (stream_word(seed, 2 * index + 1) >> 11) as f64 * (-53f64).exp2();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}

/// Noisy sequences, each carrying its class template at a random offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    seed: u64,
    channels: usize,
    time: usize,
    classes: usize,
    inputs: Vec<f32>,
    labels: Vec<usize>,
    offsets: Vec<usize>,
}

/// Sample `i` has label `i mod num_classes`, so every class appears
/// `dataset_size / num_classes` times, give or take one.
pub fn make_synthetic(tc: &TrainConfig, in_channels: usize) -> Result<SyntheticDataset> {
    tc.validate()?;
    let (channels, time, classes) = (in_channels, tc.seq_len, tc.num_classes);
    if channels == 0 {
        return Err(Error::config("in_channels must be at least 1"));
    }
    if time < TEMPLATE_LEN {
        return Err(Error::config(format!("T = {time} is shorter than the template length {TEMPLATE_LEN}")));
    }
    if classes > MAX_CLASSES {
        return Err(Error::config(format!("at most {MAX_CLASSES} classes are supported, got {classes}")));
    }
    let templates: Vec<Vec<f32>> = (0..classes).map(|k| class_template(k, channels)).collect();
    let n = tc.dataset_size;
    let per_sample = channels * time;
    let noise_seed = tc.data_seed ^ NOISE_STREAM;
    let offset_seed = tc.data_seed ^ OFFSET_STREAM;
    let mut inputs = Vec::with_capacity(n * per_sample);
    let mut labels = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        let offset = (stream_word(offset_seed, i as u64) % (time - TEMPLATE_LEN + 1) as u64) as usize;
        let base = inputs.len();
        inputs.extend((0..per_sample).map(|e| gaussian(noise_seed, (i * per_sample + e) as u64)));
        let tpl = &templates[label];
        for c in 0..channels {
            for j in 0..TEMPLATE_LEN {
                inputs[base + c * time + offset + j] += tc.amplitude * tpl[c * TEMPLATE_LEN + j];
            }
        }
        labels.push(label);
        offsets.push(offset);
    }
    Ok(SyntheticDataset { seed: tc.data_seed, channels, time, classes, inputs, labels, offsets })
}

impl SyntheticDataset {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Start of the template inside sample `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Sample `i` as `[channel][time]`.
    pub fn input(&self, i: usize) -> &[f32] {
        let n = self.channels * self.time;
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn sample(&self, i: usize) -> Tensor {
        self.batch(&[i]).0
    }

    /// Stacks the given samples into `[indices.len(), C, T]`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.channels * self.time);
        for &i in indices {
            data.extend_from_slice(self.input(i));
        }
        let x = Tensor::from_vec([indices.len(), self.channels, self.time], data).expect("sizes agree");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Training and validation indices. The last `round(len * val_fraction)`
    /// samples are held out; labels cycle, so both splits stay balanced.
    pub fn split(&self, val_fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n_val = ((self.len() as f64 * val_fraction).round() as usize).min(self.len());
        let cut = self.len() - n_val;
        ((0..cut).collect(), (cut..self.len()).collect())
    }
}
