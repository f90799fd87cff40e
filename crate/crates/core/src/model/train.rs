use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, LossConfig};
use super::metrics::average_precision;
use super::net::{backward, forward, Batch, ModelParams};
use super::optim::{Adam, AdamConfig};
use super::tensor::{Scalar, Tensor};
use crate::dataset::{augment_color, augment_flip, ColorJitter, Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::space::ActionSpace;

/// Samples per inference forward pass.
pub const INFER_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    /// Random horizontal flip about the action start.
    pub flip: bool,
    pub color: bool,
    pub jitter: ColorJitter,
    pub seed: u64,
    /// Gradient shards per minibatch; reduced in shard order.
    pub shards: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            epochs: 20,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            flip: true,
            color: true,
            jitter: ColorJitter::default(),
            seed: 0,
            shards: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.shards == 0 {
            return Err(Error::Config("batch size, epochs and shards must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Loss and gradient of one minibatch.
pub fn loss_and_grad<T: Scalar>(p: &ModelParams<T>, samples: &[&Sample], cfg: &LossConfig) -> Result<(T, Vec<Tensor<T>>)> {
    let b = Batch::new(&p.arch, samples)?;
    let f = forward(p, &b, true)?;
    let out = batch_loss(&f.logits, f.aux.as_deref(), &b, cfg)?;
    let g = backward(p, &b, &f, &out.dlogits, out.daux.as_deref())?;
    Ok((out.loss, g))
}

/// As [`loss_and_grad`], split into contiguous shards evaluated in parallel
/// and summed in shard order.
pub fn loss_and_grad_sharded<T: Scalar>(
    p: &ModelParams<T>,
    samples: &[&Sample],
    cfg: &LossConfig,
    shards: usize,
) -> Result<(T, Vec<Tensor<T>>)> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if shards <= 1 {
        return loss_and_grad(p, samples, cfg);
    }
    let per = samples.len().div_ceil(shards);
    let parts: Vec<(usize, T, Vec<Tensor<T>>)> = samples
        .par_chunks(per)
        .map(|c| loss_and_grad(p, c, cfg).map(|(l, g)| (c.len(), l, g)))
        .collect::<Result<_>>()?;
    let total = T::of(samples.len() as f64);
    let mut loss = T::zero();
    let mut grads = p.zeros_like();
    for (n, l, g) in parts {
        let w = T::of(n as f64) / total;
        loss = loss + w * l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            for (a, &v) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a = *a + w * v;
            }
        }
    }
    Ok((loss, grads))
}

/// Raw logits (and aux outputs) per sample, in crop order.
pub fn logits(p: &ModelParams, samples: &[&Sample]) -> Result<Vec<(Vec<f32>, Option<Vec<f32>>)>> {
    let px = p.arch.input_size * p.arch.input_size;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(INFER_CHUNK) {
        let b = Batch::new(&p.arch, chunk)?;
        let f = forward(p, &b, false)?;
        for i in 0..chunk.len() {
            let aux = f.aux.as_ref().map(|a| a[i * px..(i + 1) * px].to_vec());
            out.push((f.logits[i * px..(i + 1) * px].to_vec(), aux));
        }
    }
    Ok(out)
}

/// Pooled AP over all valid cells of `samples`, ranking by logit.
pub fn evaluate_ap(p: &ModelParams, samples: &[&Sample]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (s, (z, _)) in samples.iter().zip(logits(p, samples)?) {
        for ((&v, &l), &zi) in s.valid.data().iter().zip(s.label.data()).zip(&z) {
            if v {
                scores.push(zi);
                labels.push(l);
            }
        }
    }
    average_precision(&scores, &labels)
}

fn augment(s: &Sample, space: &ActionSpace, cfg: &TrainConfig, rng: &mut Rng) -> Result<Sample> {
    let mut out = if cfg.flip && rng.gen_bool(0.5) {
        augment_flip(space, s)?
    } else {
        s.clone()
    };
    if cfg.color {
        out = augment_color(&out, &cfg.jitter, rng);
    }
    Ok(out)
}

/// Minibatch Adam training; returns the parameters of the best validation-AP
/// epoch (earliest on ties).
pub fn train(
    p0: &ModelParams,
    train_set: &[&Sample],
    val_set: &[&Sample],
    space: &ActionSpace,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("empty training split".into()));
    }
    if val_set.is_empty() {
        return Err(Error::InsufficientData("empty validation split".into()));
    }
    let mut rng = Rng::new(cfg.seed).substream("train");
    let mut p = p0.clone();
    let mut opt = Adam::new(&p.tensors, cfg.adam);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| augment(train_set[i], space, cfg, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Sample> = batch.iter().collect();
            let (loss, g) = loss_and_grad_sharded(&p, &refs, &cfg.loss, cfg.shards)?;
            if !loss.is_finite() {
                return Err(Error::Config(format!("training diverged at epoch {epoch}")));
            }
            opt.step(&mut p.tensors, &g, cfg.lr);
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let val_ap = evaluate_ap(&p, val_set)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_ap,
        });
        if best.as_ref().is_none_or(|b| val_ap > b.0) {
            best = Some((val_ap, epoch, p.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok((
        params,
        TrainHistory {
            epochs: history,
            best_epoch,
        },
    ))
}

/// [`train`] on a split dataset's train and validation records.
pub fn train_dataset(
    p0: &ModelParams,
    data: &Dataset,
    space: &ActionSpace,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    train(p0, &data.split_samples(Split::Train), &data.split_samples(Split::Val), space, cfg)
}
