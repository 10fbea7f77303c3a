//! Genomes: per-layer weights plus binary masks, and the pruning operators
//! that act on them.
//!
//! Conv layers are pruned filter by filter; killing filter `f` of one conv
//! layer also masks input channel `f` of the next conv layer, or the FC
//! columns that read feature map `f` when the next weighted layer is fully
//! connected. FC layers are pruned connection by connection. Mutation only
//! ever removes weights.

mod checkpoint;

use std::sync::Arc;

use rand::Rng;

use crate::error::{ensure, Result};
use crate::metrics::{FitnessWeights, Metrics};
use crate::nn::{NetworkArch, Params, WeightShape};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone)]
pub struct Genome {
    arch: Arc<NetworkArch>,
    params: Params,
    masks: Vec<Vec<bool>>,
    metrics: Option<(FitnessWeights, Metrics)>,
}

impl Genome {
    /// A genome with every weight alive.
    pub fn dense(arch: Arc<NetworkArch>, params: Params) -> Result<Self> {
        let masks = arch
            .weight_shapes()
            .iter()
            .map(|s| vec![true; s.len()])
            .collect();
        Self::from_parts(arch, params, masks)
    }

    pub fn from_parts(
        arch: Arc<NetworkArch>,
        params: Params,
        masks: Vec<Vec<bool>>,
    ) -> Result<Self> {
        params.check_against(&arch)?;
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
        Ok(Self {
            arch,
            params,
            masks,
            metrics: None,
        })
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn arch_arc(&self) -> &Arc<NetworkArch> {
        &self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn into_parts(self) -> (Arc<NetworkArch>, Params, Vec<Vec<bool>>) {
        (self.arch, self.params, self.masks)
    }

    /// Replaces the weights, keeping the masks. Clears cached metrics.
    pub fn with_params(&self, params: Params) -> Result<Self> {
        Self::from_parts(self.arch.clone(), params, self.masks.clone())
    }

    pub fn is_dense(&self) -> bool {
        self.masks.iter().all(|m| m.iter().all(|&v| v))
    }

    pub fn layer_count(&self) -> usize {
        self.masks.len()
    }

    pub fn alive_count(&self) -> usize {
        self.masks
            .iter()
            .map(|m| m.iter().filter(|&&v| v).count())
            .sum()
    }

    pub fn weight_count(&self) -> usize {
        self.masks.iter().map(Vec::len).sum()
    }

    /// Per-filter liveness of a conv layer: a filter is alive while any of
    /// its mask entries is set. `None` for FC layers.
    pub fn alive_filters(&self, layer: usize) -> Option<Vec<bool>> {
        match self.arch.weight_shapes()[layer] {
            WeightShape::Conv { filters, .. } => {
                let per = self.masks[layer].len() / filters.max(1);
                Some(
                    (0..filters)
                        .map(|f| self.masks[layer][f * per..(f + 1) * per].iter().any(|&m| m))
                        .collect(),
                )
            }
            WeightShape::Fc { .. } => None,
        }
    }

    pub fn cached_metrics(&self, weights: &FitnessWeights) -> Option<Metrics> {
        match &self.metrics {
            Some((w, m)) if w == weights => Some(*m),
            _ => None,
        }
    }

    pub(crate) fn set_metrics(&mut self, weights: FitnessWeights, metrics: Metrics) {
        self.metrics = Some((weights, metrics));
    }

    pub(crate) fn clear_metrics(&mut self) {
        self.metrics = None;
    }

    /// Bitwise equality of weights, biases and masks.
    pub fn bit_identical(&self, other: &Genome) -> bool {
        *self.arch == *other.arch
            && self.masks == other.masks
            && self
                .params
                .layers
                .iter()
                .zip(&other.params.layers)
                .all(|(a, b)| {
                    let bits = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                    bits(a.weights.as_slice()) == bits(b.weights.as_slice())
                        && bits(&a.bias) == bits(&b.bias)
                })
    }

    /// Whether the masks are already closed under [`propagate_masks`] and
    /// every conv kernel slice is masked as a whole.
    pub fn masks_consistent(&self) -> bool {
        let shapes = self.arch.weight_shapes();
        let granular = shapes.iter().zip(&self.masks).all(|(s, m)| match *s {
            WeightShape::Conv { kernel, .. } => m
                .chunks(kernel * kernel)
                .all(|slice| slice.iter().all(|&v| v == slice[0])),
            WeightShape::Fc { .. } => true,
        });
        granular && propagate_masks(self).masks == self.masks
    }

    #[cfg(test)]
    pub(crate) fn masks_mut(&mut self) -> &mut [Vec<bool>] {
        self.metrics = None;
        &mut self.masks
    }

    pub(crate) fn set_layer(&mut self, layer: usize, from: &Genome) {
        self.metrics = None;
        self.params.layers[layer] = from.params.layers[layer].clone();
        self.masks[layer] = from.masks[layer].clone();
    }
}

/// Kills each alive conv filter with probability `conv_rate` and each alive
/// FC weight with probability `fc_rate`, then propagates and applies masks.
pub fn mutate<R: Rng>(g: &Genome, conv_rate: f64, fc_rate: f64, rng: &mut R) -> Genome {
    let mut out = g.clone();
    out.clear_metrics();
    let shapes = g.arch.weight_shapes();
    for (l, shape) in shapes.iter().enumerate() {
        let mask = &mut out.masks[l];
        match *shape {
            WeightShape::Conv { filters, .. } => {
                let per = mask.len() / filters.max(1);
                for f in 0..filters {
                    let slice = &mut mask[f * per..(f + 1) * per];
                    if slice.iter().any(|&m| m) && rng.gen::<f64>() < conv_rate {
                        slice.fill(false);
                    }
                }
            }
            WeightShape::Fc { .. } if fc_rate > 0.0 => {
                for m in mask.iter_mut().filter(|m| **m) {
                    if rng.gen::<f64>() < fc_rate {
                        *m = false;
                    }
                }
            }
            WeightShape::Fc { .. } => {}
        }
    }
    apply_masks(&propagate_masks(&out))
}

/// Forces channel-wise pruning downstream of every dead conv filter.
pub fn propagate_masks(g: &Genome) -> Genome {
    let mut out = g.clone();
    let shapes = g.arch.weight_shapes();
    let in_positions = g.arch.input_positions();
    for l in 0..shapes.len().saturating_sub(1) {
        let Some(alive) = out.alive_filters(l) else {
            continue;
        };
        if alive.iter().all(|&a| a) {
            continue;
        }
        let next = &mut out.masks[l + 1];
        match shapes[l + 1] {
            WeightShape::Conv {
                filters,
                channels,
                kernel,
            } => {
                let kk = kernel * kernel;
                for (c, _) in alive.iter().enumerate().filter(|(_, &a)| !a) {
                    for f in 0..filters {
                        next[(f * channels + c) * kk..][..kk].fill(false);
                    }
                }
            }
            WeightShape::Fc { outputs, inputs } => {
                let width = in_positions[l + 1];
                for (c, _) in alive.iter().enumerate().filter(|(_, &a)| !a) {
                    for o in 0..outputs {
                        next[o * inputs + c * width..][..width].fill(false);
                    }
                }
            }
        }
    }
    if out.masks != g.masks {
        out.clear_metrics();
    }
    out
}

/// Zeroes every masked weight.
pub fn apply_masks(g: &Genome) -> Genome {
    let mut out = g.clone();
    let mut changed = false;
    for (layer, mask) in out.params.layers.iter_mut().zip(&g.masks) {
        for (w, &alive) in layer.weights.as_mut_slice().iter_mut().zip(mask) {
            if !alive && *w != 0.0 {
                *w = 0.0;
                changed = true;
            }
        }
    }
    if changed {
        out.clear_metrics();
    }
    out
}
