//! Oracles shared by the integration suites.
//!
//! The block gradient oracle re-implements the block forward pass in `f64`
//! with naive loops, copies the parameters out of a [`Block`], and takes
//! central differences there. It shares no code with the layers it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rtconv::tcsconv::{uniform_fill, Block, Parameterized, PointwiseLayer, SkipLink, Tensor};

pub fn random_tensor(seed: u64, shape: [usize; 3], scale: f32) -> Tensor {
    let mut data = vec![0.0; shape.iter().product()];
    uniform_fill(seed, scale, &mut data);
    Tensor::from_vec(shape, data).unwrap()
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `|a - n| / max(|a|, |n|, 1e-2)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// `[batch][channel][time]` in `f64`.
type Act = Vec<Vec<Vec<f64>>>;

fn to_act(t: &Tensor) -> Act {
    (0..t.batch())
        .map(|b| (0..t.channels()).map(|c| t.lane(b, c).iter().map(|&v| v as f64).collect()).collect())
        .collect()
}

enum Mixing {
    Float(String, usize, usize),
    Fixed(Vec<Vec<f64>>),
    Identity,
}

/// Independent `f64` model of one residual block.
pub struct ReferenceBlock {
    pub params: BTreeMap<String, Vec<f64>>,
    kernels: Vec<usize>,
    mixing: Vec<Mixing>,
    skip: Option<Mixing>,
    eps: f64,
}

fn fixed_matrix(m: &rtconv::linalg::DenseTernary) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c).as_i8() as f64).collect()).collect()
}

impl ReferenceBlock {
    pub fn from_block(block: &mut Block) -> Self {
        let mut params = BTreeMap::new();
        {
            let mut ps = Vec::new();
            block.collect_params("", &mut ps);
            for p in ps {
                params.insert(p.name, p.value.iter().map(|&v| v as f64).collect());
            }
        }
        let mut kernels = Vec::new();
        let mut mixing = Vec::new();
        for i in 0..block.repeats() {
            kernels.push(block.depthwise(i).kernel());
            mixing.push(match block.pointwise(i) {
                PointwiseLayer::TrainableFloat(f) => {
                    Mixing::Float(format!("sub{i}.pointwise.weight"), f.out_channels(), f.in_channels())
                }
                PointwiseLayer::FrozenTernary(t) => Mixing::Fixed(fixed_matrix(&t.materialize())),
            });
        }
        let skip = match block.skip() {
            SkipLink::TrainedFloat(f) => Some(Mixing::Float("skip.weight".into(), f.out_channels(), f.in_channels())),
            SkipLink::RandomTernary(t) => Some(Mixing::Fixed(fixed_matrix(&t.materialize()))),
            SkipLink::Identity => Some(Mixing::Identity),
            SkipLink::None => None,
        };
        ReferenceBlock { params, kernels, mixing, skip, eps: block.bn(0).eps as f64 }
    }

    fn depthwise(&self, x: &Act, name: &str, k: usize) -> Act {
        let w = &self.params[name];
        let half = (k as i64 - 1) / 2;
        x.iter()
            .map(|sample| {
                sample
                    .iter()
                    .enumerate()
                    .map(|(c, lane)| {
                        (0..lane.len() as i64)
                            .map(|t| {
                                (0..k as i64)
                                    .filter_map(|j| {
                                        let s = t + j - half;
                                        (0..lane.len() as i64)
                                            .contains(&s)
                                            .then(|| w[c * k + j as usize] * lane[s as usize])
                                    })
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn mix(&self, x: &Act, m: &Mixing) -> Act {
        let matrix: Vec<Vec<f64>> = match m {
            Mixing::Identity => return x.clone(),
            Mixing::Fixed(m) => m.clone(),
            Mixing::Float(name, rows, cols) => {
                let w = &self.params[name];
                (0..*rows).map(|r| w[r * cols..(r + 1) * cols].to_vec()).collect()
            }
        };
        x.iter()
            .map(|sample| {
                let time = sample[0].len();
                matrix
                    .iter()
                    .map(|row| (0..time).map(|t| row.iter().zip(sample).map(|(w, lane)| w * lane[t]).sum()).collect())
                    .collect()
            })
            .collect()
    }

    fn batchnorm(&self, x: &Act, prefix: &str) -> Act {
        let gamma = &self.params[&format!("{prefix}gamma")];
        let beta = &self.params[&format!("{prefix}beta")];
        let channels = x[0].len();
        let mut out = x.clone();
        for c in 0..channels {
            let vals: Vec<f64> = x.iter().flat_map(|s| s[c].iter().copied()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let istd = 1.0 / (var + self.eps).sqrt();
            for s in out.iter_mut() {
                for v in s[c].iter_mut() {
                    *v = gamma[c] * (*v - mean) * istd + beta[c];
                }
            }
        }
        out
    }

    /// Returns the output and the sign pattern of every ReLU input.
    pub fn forward(&self, x: &Act) -> (Act, Vec<bool>) {
        let mut signs = Vec::new();
        let mut h = x.clone();
        let last = self.kernels.len() - 1;
        let mut z = Act::new();
        for i in 0..self.kernels.len() {
            let d = self.depthwise(&h, &format!("sub{i}.depthwise.weight"), self.kernels[i]);
            let p = self.mix(&d, &self.mixing[i]);
            z = self.batchnorm(&p, &format!("sub{i}.bn."));
            if i != last {
                h = relu(&z, &mut signs);
            }
        }
        if let Some(m) = &self.skip {
            let s = self.batchnorm(&self.mix(x, m), "skip_bn.");
            for (zs, ss) in z.iter_mut().zip(&s) {
                for (zl, sl) in zs.iter_mut().zip(ss) {
                    for (a, b) in zl.iter_mut().zip(sl) {
                        *a += b;
                    }
                }
            }
        }
        let y = relu(&z, &mut signs);
        (y, signs)
    }
}

fn relu(x: &Act, signs: &mut Vec<bool>) -> Act {
    x.iter()
        .map(|s| {
            s.iter()
                .map(|l| {
                    l.iter()
                        .map(|&v| {
                            signs.push(v > 0.0);
                            v.max(0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn act_dot(a: &Act, probe: &Act) -> f64 {
    a.iter()
        .flatten()
        .flatten()
        .zip(probe.iter().flatten().flatten())
        .map(|(x, y)| x * y)
        .sum()
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
    /// Largest difference between the `f32` block output and the reference.
    pub forward_err: f64,
    /// Coordinates skipped because the perturbation moved a ReLU input
    /// across zero, where a central difference is not a derivative.
    pub kink_skips: usize,
}

impl GradCheck {
    fn record(&mut self, name: String, analytic: f64, numeric: f64) {
        let e = rel_err(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_err {
            self.max_rel_err = e;
            self.worst = format!("{name}: analytic {analytic:.6} numeric {numeric:.6}");
        }
    }
}

/// Central differences of `L = <block(x), probe>` against the analytic
/// gradients of every trainable tensor and of the input.
pub fn check_block_gradients(block: &mut Block, x: &Tensor, probe_seed: u64, h: f64) -> GradCheck {
    let (y, cache) = block.forward(x, true).unwrap();
    let probe_t = random_tensor(probe_seed, y.shape(), 1.0);
    block.zero_grad();
    let dx = block.backward(&cache, &probe_t).unwrap();

    let mut reference = ReferenceBlock::from_block(block);
    let probe = to_act(&probe_t);
    let xa = to_act(x);
    let mut report = GradCheck::default();

    let (y_ref, _) = reference.forward(&xa);
    for (a, b) in to_act(&y).iter().flatten().flatten().zip(y_ref.iter().flatten().flatten()) {
        report.forward_err = report.forward_err.max((a - b).abs());
    }

    let mut analytic = Vec::new();
    {
        let mut ps = Vec::new();
        block.collect_params("", &mut ps);
        for p in ps {
            analytic.push((p.name, p.grad.to_vec()));
        }
    }
    for (name, grad) in &analytic {
        for (i, &g) in grad.iter().enumerate() {
            let v0 = reference.params[name][i];
            reference.params.get_mut(name).unwrap()[i] = v0 + h;
            let (yp, sp) = reference.forward(&xa);
            reference.params.get_mut(name).unwrap()[i] = v0 - h;
            let (ym, sm) = reference.forward(&xa);
            reference.params.get_mut(name).unwrap()[i] = v0;
            if sp != sm {
                report.kink_skips += 1;
                continue;
            }
            let num = (act_dot(&yp, &probe) - act_dot(&ym, &probe)) / (2.0 * h);
            report.record(format!("{name}[{i}]"), g as f64, num);
        }
    }
    let [batch, channels, time] = x.shape();
    for b in 0..batch {
        for c in 0..channels {
            for t in 0..time {
                let (mut xp, mut xm) = (xa.clone(), xa.clone());
                xp[b][c][t] += h;
                xm[b][c][t] -= h;
                let ((yp, sp), (ym, sm)) = (reference.forward(&xp), reference.forward(&xm));
                if sp != sm {
                    report.kink_skips += 1;
                    continue;
                }
                let num = (act_dot(&yp, &probe) - act_dot(&ym, &probe)) / (2.0 * h);
                report.record(format!("input[{b},{c},{t}]"), dx.get(b, c, t) as f64, num);
            }
        }
    }
    report
}

/// Maximum-likelihood template detector: for every class and offset, the
/// Gaussian log-likelihood gain `a <x, tpl> - a^2 |tpl|^2 / 2`; the best
/// pair wins.
pub fn matched_filter_accuracy(data: &rtconv::model::SyntheticDataset, indices: &[usize], amplitude: f32) -> f64 {
    use rtconv::model::{class_template, TEMPLATE_LEN};
    let (channels, time) = (data.channels(), data.time());
    let templates: Vec<Vec<f32>> = (0..data.num_classes()).map(|k| class_template(k, channels)).collect();
    let a = amplitude as f64;
    let mut correct = 0;
    for &i in indices {
        let x = data.input(i);
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (k, tpl) in templates.iter().enumerate() {
            let energy: f64 = tpl.iter().map(|&v| (v as f64).powi(2)).sum();
            for o in 0..=time - TEMPLATE_LEN {
                let mut corr = 0.0f64;
                for c in 0..channels {
                    for j in 0..TEMPLATE_LEN {
                        corr += x[c * time + o + j] as f64 * tpl[c * TEMPLATE_LEN + j] as f64;
                    }
                }
                let score = a * corr - a * a * energy / 2.0;
                if score > best.0 {
                    best = (score, k);
                }
            }
        }
        correct += usize::from(best.1 == data.label(i));
    }
    correct as f64 / indices.len() as f64
}

/// Number of trainable values, found by listing every tensor that receives
/// a gradient.
pub fn enumerate_trainable<P: rtconv::tcsconv::Parameterized>(model: &mut P) -> usize {
    let mut params = Vec::new();
    model.collect_params("", &mut params);
    params.iter().map(|p| p.value.len()).sum()
}

/// O(n^2) dominance check.
pub fn pareto_oracle(points: &[(usize, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(p, a)| {
            !points
                .iter()
                .any(|&(q, b)| q <= p && b >= a && (q < p || b > a))
        })
        .collect()
}
