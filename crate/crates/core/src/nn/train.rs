use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{ensure, Error, Result};
use crate::mnist::Dataset;

use super::arch::NetworkArch;
use super::compact::compact;
use super::network::{
    argmax, forward_unchecked, loss_and_backward_unchecked, loss_unchecked, Params,
};

/// SGD-with-momentum schedule. The learning rate is multiplied by
/// `lr_decay` once `decay_at` of the total steps have run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub decay_at: f64,
}

impl TrainConfig {
    pub fn with_epochs(epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_decay: 0.1,
            decay_at: 2.0 / 3.0,
        }
    }

    /// Dense pretraining of the baseline.
    pub fn pretrain() -> Self {
        Self::with_epochs(10)
    }

    /// Elite retraining every retrain interval.
    pub fn retrain() -> Self {
        Self::with_epochs(1)
    }

    /// Retraining of the final elite.
    pub fn final_retrain() -> Self {
        Self::with_epochs(3)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.batch_size >= 1,
            Config,
            "batch size must be at least 1"
        );
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Config,
            "learning rate must be positive, got {}",
            self.learning_rate
        );
        ensure!(
            (0.0..1.0).contains(&self.momentum),
            Config,
            "momentum must lie in [0, 1), got {}",
            self.momentum
        );
        ensure!(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            Config,
            "lr decay factor must lie in (0, 1], got {}",
            self.lr_decay
        );
        ensure!(
            (0.0..=1.0).contains(&self.decay_at),
            Config,
            "decay point must lie in [0, 1], got {}",
            self.decay_at
        );
        Ok(())
    }
}

pub(crate) fn check_masks(arch: &NetworkArch, params: &Params, masks: &[Vec<bool>]) -> Result<()> {
    params.check_against(arch)?;
    ensure!(
        masks.len() == params.layers.len(),
        Shape,
        "{} masks for {} weighted layers",
        masks.len(),
        params.layers.len()
    );
    for (i, (m, l)) in masks.iter().zip(&params.layers).enumerate() {
        ensure!(
            m.len() == l.weights.len(),
            Shape,
            "layer {i}: mask has {} entries, weights {}",
            m.len(),
            l.weights.len()
        );
    }
    Ok(())
}

const EVAL_BATCH: usize = 100;

/// Trains `params ⊙ masks` with SGD + momentum. Masked weights receive no
/// update and are exactly zero in the result; biases are never masked.
pub fn train_masked<R: Rng>(
    arch: &NetworkArch,
    params: &Params,
    masks: &[Vec<bool>],
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Params> {
    check_masks(arch, params, masks)?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    ensure!(
        arch.input_len() == crate::mnist::IMAGE_LEN,
        Shape,
        "architecture input {:?} does not take MNIST images",
        arch.input()
    );

    let c = compact(arch, params, masks);
    let mut p = c.params.clone();
    let mut velocity = Params::zeros(&c.arch);
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let decay_step = (total_steps as f64 * cfg.decay_at).floor() as usize;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            data.gather(batch, &mut images, &mut labels);
            let (loss, grads) = loss_and_backward_unchecked(&c.arch, &p, &images, &labels);
            epoch_loss += loss * batch.len() as f64;
            let lr = if step < decay_step {
                cfg.learning_rate
            } else {
                cfg.learning_rate * cfg.lr_decay
            };
            sgd_step(&mut p, &mut velocity, &grads, &c.masks, lr, cfg.momentum);
            step += 1;
        }
        debug!(
            "epoch {}/{}: mean loss {:.5}",
            epoch + 1,
            cfg.epochs,
            epoch_loss / data.len() as f64
        );
    }
    Ok(c.scatter(params, masks, &p))
}

fn sgd_step(
    params: &mut Params,
    velocity: &mut Params,
    grads: &Params,
    masks: &[Vec<bool>],
    lr: f64,
    momentum: f64,
) {
    for (((p, v), g), m) in params
        .layers
        .iter_mut()
        .zip(&mut velocity.layers)
        .zip(&grads.layers)
        .zip(masks)
    {
        let w = p.weights.as_mut_slice();
        let vw = v.weights.as_mut_slice();
        for (((w, v), g), &alive) in w.iter_mut().zip(vw).zip(g.weights.as_slice()).zip(m) {
            if alive {
                *v = momentum * *v + lr * g;
                *w -= *v;
            } else {
                *w = 0.0;
            }
        }
        for ((b, v), g) in p.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
            *v = momentum * *v + lr * g;
            *b -= *v;
        }
    }
}

fn eval_batches(
    arch: &NetworkArch,
    params: &Params,
    masks: &[Vec<bool>],
    data: &Dataset,
    mut f: impl FnMut(&NetworkArch, &Params, &[f64], &[u8]),
) -> Result<()> {
    check_masks(arch, params, masks)?;
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let c = compact(arch, params, masks);
    let n = data.len();
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let images = &data.images()[start * arch.input_len()..end * arch.input_len()];
        f(&c.arch, &c.params, images, &data.labels()[start..end]);
        start = end;
    }
    Ok(())
}

/// Fraction of misclassified samples of `params ⊙ masks` on `data`.
pub fn predict_error(
    arch: &NetworkArch,
    params: &Params,
    masks: &[Vec<bool>],
    data: &Dataset,
) -> Result<f64> {
    let classes = arch.classes();
    let mut wrong = 0usize;
    eval_batches(arch, params, masks, data, |a, p, images, labels| {
        let logits = forward_unchecked(a, p, images, labels.len(), None);
        wrong += logits
            .chunks_exact(classes)
            .zip(labels)
            .filter(|(row, &l)| argmax(row) != l as usize)
            .count();
    })?;
    Ok(wrong as f64 / data.len() as f64)
}

/// Mean cross-entropy of `params ⊙ masks` on `data`.
pub fn mean_loss(
    arch: &NetworkArch,
    params: &Params,
    masks: &[Vec<bool>],
    data: &Dataset,
) -> Result<f64> {
    let mut total = 0.0;
    eval_batches(arch, params, masks, data, |a, p, images, labels| {
        total += loss_unchecked(a, p, images, labels) * labels.len() as f64;
    })?;
    Ok(total / data.len() as f64)
}
