//! Adam training loop.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss, FeatureExtractor, LossParts, LossWeights};
use super::network::{Grads, Network};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    p: AdamParams,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(p: AdamParams) -> Self {
        Self {
            p,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step<T: Scalar>(&mut self, net: &mut Network<T>, grads: &Grads<T>) {
        self.t += 1;
        let (b1, b2) = (self.p.beta1, self.p.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let mut slot = 0;
        for (conv, g) in net.convs_mut().into_iter().zip(grads) {
            for (param, grad) in [(&mut conv.weight, &g.weight), (&mut conv.bias, &g.bias)] {
                if self.m.len() <= slot {
                    self.m.push(vec![0.0; param.len()]);
                    self.v.push(vec![0.0; param.len()]);
                }
                let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
                for i in 0..param.len() {
                    let gi = grad[i].to_f64().unwrap();
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                    let upd = self.p.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.p.eps);
                    param[i] = param[i] - T::lit(upd);
                }
                slot += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Side of the square training crops.
    pub crop: u32,
    pub val_fraction: f64,
    pub adam: AdamParams,
    pub loss: LossWeights,
    /// Stop early once this much wall time has passed.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 16,
            seed: 0,
            crop: 64,
            val_fraction: 0.2,
            adam: AdamParams::default(),
            loss: LossWeights::default(),
            time_budget_secs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 || self.crop < 4 {
            return Err(Error::Config("batch, epochs must be positive and crop >= 4".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("val_fraction {} not in [0, 1)", self.val_fraction)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.loss.validate()
    }
}

/// One training example; all tensors have batch 1.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub input: Tensor<f32>,
    pub truth: Tensor<f32>,
    /// `1 = valid`, one channel.
    pub hole: Tensor<f32>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub train_l1: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub steps: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub stopped_early: bool,
}

/// Seeded shuffle, then the first `round(n * (1 - val_fraction))` indices
/// train and the rest validate.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5B11_7A11));
    let n_val = (n as f64 * val_fraction).round() as usize;
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn sample_loss<T: Scalar>(
    net: &Network<T>,
    s: &TrainSample,
    w: &LossWeights,
    feat: &FeatureExtractor<T>,
    want_grad: bool,
) -> Result<(LossParts, Option<Grads<T>>)> {
    let input = s.input.cast::<T>();
    let (pred, tape) = net.forward_tape(&input)?;
    let (parts, dpred) = loss(&pred, &s.truth.cast(), &s.hole.cast(), w, feat)?;
    Ok((parts, want_grad.then(|| net.backward(&tape, &dpred))))
}

/// Mean loss over `samples` without updating anything.
pub fn evaluate_loss(
    net: &Network<f32>,
    samples: &[&TrainSample],
    w: &LossWeights,
) -> Result<LossParts> {
    let feat = FeatureExtractor::frozen();
    let parts: Vec<LossParts> = samples
        .par_iter()
        .map(|s| sample_loss(net, s, w, &feat, false).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(mean_parts(&parts))
}

fn mean_parts(parts: &[LossParts]) -> LossParts {
    let n = parts.len().max(1) as f64;
    let mut m = LossParts::default();
    for p in parts {
        m.l1 += p.l1 / n;
        m.hole += p.hole / n;
        m.valid += p.valid / n;
        m.vgg += p.vgg / n;
        m.style += p.style / n;
        m.total += p.total / n;
    }
    m
}

/// Trains `net` in place. Samples in a batch are processed in parallel and
/// their gradients summed in batch order, so the result does not depend on
/// the thread count.
pub fn train(net: &mut Network<f32>, samples: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.val_fraction, cfg.seed);
    if train_idx.is_empty() {
        return Err(Error::Degenerate("no samples left for training after the split".into()));
    }
    let feat = FeatureExtractor::<f32>::frozen();
    let mut adam = Adam::new(cfg.adam.clone());
    let mut report = TrainReport {
        train_size: train_idx.len(),
        val_size: val_idx.len(),
        ..TrainReport::default()
    };
    let start = Instant::now();
    let budget = cfg.time_budget_secs.map(Duration::from_secs_f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train_idx.clone();

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_parts = Vec::new();
        for chunk in order.chunks(cfg.batch) {
            let results: Vec<(LossParts, Option<Grads<f32>>)> = chunk
                .par_iter()
                .map(|&i| sample_loss(net, &samples[i], &cfg.loss, &feat, true))
                .collect::<Result<_>>()?;
            let mut grads = net.zero_grads();
            let scale = 1.0 / chunk.len() as f32;
            for (parts, g) in &results {
                if !parts.total.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, step {}: {parts:?}",
                        report.steps
                    )));
                }
                for (acc, gi) in grads.iter_mut().zip(g.as_ref().unwrap()) {
                    for (a, b) in acc.weight.iter_mut().zip(&gi.weight) {
                        *a += b * scale;
                    }
                    for (a, b) in acc.bias.iter_mut().zip(&gi.bias) {
                        *a += b * scale;
                    }
                }
                epoch_parts.push(*parts);
            }
            adam.step(net, &grads);
            report.steps += 1;
            if budget.is_some_and(|b| start.elapsed() > b) {
                report.stopped_early = true;
                let m = mean_parts(&epoch_parts);
                report.train_loss.push(m.total);
                report.train_l1.push(m.l1);
                break 'epochs;
            }
        }
        let m = mean_parts(&epoch_parts);
        report.train_loss.push(m.total);
        report.train_l1.push(m.l1);
        if !val_idx.is_empty() {
            let val: Vec<&TrainSample> = val_idx.iter().map(|&i| &samples[i]).collect();
            let v = evaluate_loss(net, &val, &cfg.loss)?;
            log::debug!("epoch {epoch}: train {:.5} val {:.5}", m.total, v.total);
            report.val_loss.push(v.total);
        }
    }
    Ok(report)
}
