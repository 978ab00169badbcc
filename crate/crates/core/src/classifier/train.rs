use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::net::EmbedModel;
use super::pairs::{generate_pairs, PairSample};
use super::{contrastive_gradient, contrastive_loss, ClassifierError};
use crate::image::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fresh pairs drawn for every epoch.
    pub pairs_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, batch_size: 32, learning_rate: 1e-3, pairs_per_epoch: 128, seed: 17 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean pair loss of each epoch, measured before that batch's update.
    pub epoch_losses: Vec<f64>,
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

/// Mean contrastive loss over `pairs` and its gradient with respect to every
/// model parameter. Both images of a pair run through the same weights.
pub fn batch_loss_and_gradient(
    model: &EmbedModel,
    images: &[Raster],
    pairs: &[PairSample],
) -> Result<(f64, Vec<f64>), ClassifierError> {
    let mut grad = vec![0.0; model.param_count()];
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for pair in pairs {
        let (ea, ta) = model.forward_checked(&images[pair.a])?;
        let (eb, tb) = model.forward_checked(&images[pair.b])?;
        let d = ea.distance(&eb);
        loss += contrastive_loss(pair.label.x(), d, model.margin());
        let (ga, gb) = contrastive_gradient(pair.label.x(), &ea, &eb, model.margin());
        let ga: Vec<f64> = ga.iter().map(|g| g * scale).collect();
        let gb: Vec<f64> = gb.iter().map(|g| g * scale).collect();
        model.backward(&ta, &ga, &mut grad);
        model.backward(&tb, &gb, &mut grad);
    }
    Ok((loss * scale, grad))
}

/// Mean loss only.
pub fn batch_loss(model: &EmbedModel, images: &[Raster], pairs: &[PairSample]) -> Result<f64, ClassifierError> {
    let mut loss = 0.0;
    for pair in pairs {
        let d = model.embed(&images[pair.a])?.distance(&model.embed(&images[pair.b])?);
        loss += contrastive_loss(pair.label.x(), d, model.margin());
    }
    Ok(loss / pairs.len().max(1) as f64)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Mini-batch training on freshly drawn pairs each epoch. `images` are
/// preprocessed and indexed by the positions the `zones` ranges refer to.
/// Single-threaded so that a seed pins every parameter bit.
pub fn train(
    mut model: EmbedModel,
    images: &[Raster],
    zones: &[Range<usize>],
    config: &TrainConfig,
) -> Result<(EmbedModel, TrainReport), ClassifierError> {
    if config.epochs == 0 || config.batch_size == 0 || config.pairs_per_epoch < 2 {
        return Err(ClassifierError::InvalidConfig("epochs, batch size and pairs per epoch must be positive".into()));
    }
    let mut adam = Adam::new(model.param_count(), config.learning_rate);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let pairs = generate_pairs(zones, config.pairs_per_epoch, epoch_seed(config.seed, epoch))?;
        let mut total = 0.0;
        for (b, batch) in pairs.chunks(config.batch_size).enumerate() {
            let (loss, grad) = batch_loss_and_gradient(&model, images, batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ClassifierError::NonFiniteLoss { epoch, batch: b });
            }
            total += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grad);
        }
        epoch_losses.push(total / pairs.len() as f64);
        log::debug!("epoch {epoch}: loss {:.6}", epoch_losses[epoch]);
    }
    Ok((model, TrainReport { epoch_losses }))
}
