//! Error, remaining computation, sparsity and the scalarized fitness
//! `f = λ₁·e + λ₂·c + λ₃·(1 − s)` (lower is better).
//!
//! Computation is counted in multiply-accumulates (one MAC = one FLOP unit)
//! over conv and FC layers; pooling, activations and biases are excluded.

use crate::error::{ensure, Error, Result};
use crate::genome::Genome;
use crate::mnist::Dataset;
use crate::nn::{predict_error, WeightShape};

/// Scalarization coefficients `(λ₁, λ₂, λ₃)` for error, computation and density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessWeights {
    error: f64,
    computation: f64,
    density: f64,
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl FitnessWeights {
    pub fn new(error: f64, computation: f64, density: f64) -> Result<Self> {
        for (name, v) in [
            ("lambda1", error),
            ("lambda2", computation),
            ("lambda3", density),
        ] {
            ensure!(
                (0.0..=1.0).contains(&v),
                Config,
                "{name} = {v} must lie in [0, 1]"
            );
        }
        let sum = error + computation + density;
        ensure!(
            (sum - 1.0).abs() <= WEIGHT_SUM_TOLERANCE,
            Config,
            "lambda1 + lambda2 + lambda3 = {sum} must equal 1"
        );
        Ok(Self {
            error,
            computation,
            density,
        })
    }

    /// Balanced trade-off between all three objectives.
    pub fn balanced() -> Self {
        Self::new(0.3, 0.4, 0.3).expect("valid preset")
    }

    /// Emphasizes computation reduction.
    pub fn speed() -> Self {
        Self::new(0.5, 0.5, 0.0).expect("valid preset")
    }

    /// Emphasizes sparsity (storage).
    pub fn storage() -> Self {
        Self::new(0.5, 0.0, 0.5).expect("valid preset")
    }

    /// Emphasizes accuracy.
    pub fn accuracy() -> Self {
        Self::new(0.8, 0.1, 0.1).expect("valid preset")
    }

    pub fn presets() -> [(&'static str, FitnessWeights); 4] {
        [
            ("balanced", Self::balanced()),
            ("speed", Self::speed()),
            ("storage", Self::storage()),
            ("accuracy", Self::accuracy()),
        ]
    }

    pub fn preset(name: &str) -> Option<Self> {
        Self::presets()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, w)| w)
    }

    pub fn lambdas(&self) -> [f64; 3] {
        [self.error, self.computation, self.density]
    }

    pub fn combine(&self, error: f64, flops_remaining: f64, sparsity: f64) -> f64 {
        self.error * error + self.computation * flops_remaining + self.density * (1.0 - sparsity)
    }
}

/// `(e, c, s, f)` for one genome on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub error: f64,
    pub flops_remaining: f64,
    pub sparsity: f64,
    pub fitness: f64,
}

impl Metrics {
    pub fn new(weights: &FitnessWeights, error: f64, flops_remaining: f64, sparsity: f64) -> Self {
        Self {
            error,
            flops_remaining,
            sparsity,
            fitness: weights.combine(error, flops_remaining, sparsity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopCount {
    pub remaining: u64,
    pub dense: u64,
}

impl FlopCount {
    pub fn fraction(&self) -> f64 {
        if self.dense == 0 {
            0.0
        } else {
            self.remaining as f64 / self.dense as f64
        }
    }
}

/// Remaining MACs. A conv weight costs one MAC per output position; an
/// FC weight costs one MAC. Requires propagated, kernel-granular masks.
pub fn count_flops(g: &Genome) -> Result<FlopCount> {
    if !g.masks_consistent() {
        return Err(Error::InvalidInput(
            "masks are not propagated; run propagate_masks first".into(),
        ));
    }
    Ok(count_flops_unchecked(g))
}

pub(crate) fn count_flops_unchecked(g: &Genome) -> FlopCount {
    let positions = g.arch().output_positions();
    let mut remaining = 0u64;
    let mut dense = 0u64;
    for ((shape, mask), &pos) in g
        .arch()
        .weight_shapes()
        .iter()
        .zip(g.masks())
        .zip(&positions)
    {
        let alive = mask.iter().filter(|&&m| m).count() as u64;
        let per_weight = match shape {
            WeightShape::Conv { .. } => pos as u64,
            WeightShape::Fc { .. } => 1,
        };
        remaining += alive * per_weight;
        dense += shape.len() as u64 * per_weight;
    }
    FlopCount { remaining, dense }
}

/// Fraction of masked weights over all conv and FC layers.
pub fn count_sparsity(g: &Genome) -> f64 {
    let total = g.weight_count();
    if total == 0 {
        return 0.0;
    }
    (total - g.alive_count()) as f64 / total as f64
}

/// Computes `(e, c, s, f)` of `g` with error measured on `eval`.
pub fn fitness(g: &Genome, weights: &FitnessWeights, eval: &Dataset) -> Result<Metrics> {
    if eval.is_empty() {
        return Err(Error::InvalidInput(
            "fitness needs a nonempty evaluation set".into(),
        ));
    }
    let flops = count_flops(g)?;
    let error = predict_error(g.arch(), g.params(), g.masks(), eval)?;
    Ok(Metrics::new(
        weights,
        error,
        flops.fraction(),
        count_sparsity(g),
    ))
}

/// [`fitness`] with the result cached on the genome; a cached value for the
/// same weights is returned without re-evaluation.
pub fn evaluate(g: &mut Genome, weights: &FitnessWeights, eval: &Dataset) -> Result<Metrics> {
    if let Some(m) = g.cached_metrics(weights) {
        return Ok(m);
    }
    let m = fitness(g, weights, eval)?;
    g.set_metrics(*weights, m);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{mutate, propagate_masks, Genome};
    use crate::nn::{NetworkArch, Params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn dense() -> Genome {
        let arch = Arc::new(NetworkArch::lenet());
        let p = Params::init(&arch, &mut ChaCha8Rng::seed_from_u64(0));
        Genome::dense(arch, p).unwrap()
    }

    #[test]
    fn dense_lenet_flops() {
        let f = count_flops(&dense()).unwrap();
        assert_eq!(f.dense, 288_000 + 1_600_000 + 400_000 + 5_000);
        assert_eq!(f.remaining, 2_293_000);
        assert_eq!(f.fraction(), 1.0);
    }

    #[test]
    fn all_masked_has_no_flops_and_full_sparsity() {
        let g = mutate(&dense(), 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let f = count_flops(&g).unwrap();
        assert_eq!(f.remaining, 0);
        assert_eq!(f.fraction(), 0.0);
        assert_eq!(count_sparsity(&g), 1.0);
    }

    #[test]
    fn one_dead_conv1_filter_sparsity() {
        let mut g = dense();
        g.masks_mut()[0][..25].fill(false);
        let g = propagate_masks(&g);
        let s = count_sparsity(&g);
        assert!((s - 1275.0 / 430_500.0).abs() < 1e-15);
        assert!((s - 0.002962).abs() < 5e-7);
    }

    #[test]
    fn rejects_unpropagated_masks() {
        let mut g = dense();
        g.masks_mut()[0][..25].fill(false);
        assert!(count_flops(&g).is_err());
    }

    #[test]
    fn fresh_genome_has_zero_sparsity() {
        assert_eq!(count_sparsity(&dense()), 0.0);
    }

    #[test]
    fn table_row_fitness() {
        let w = FitnessWeights::new(0.3, 0.4, 0.3).unwrap();
        let f = w.combine(0.0093, 0.0622, 0.9430);
        assert!((f - 0.04477).abs() < 1e-9, "{f}");
    }

    #[test]
    fn corner_weightings() {
        let err_only = FitnessWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(err_only.combine(0.0, 1.0, 0.0), 0.0);
        let density_only = FitnessWeights::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(density_only.combine(0.3, 1.0, 0.0), 1.0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(FitnessWeights::new(0.4, 0.3, 0.2).is_err());
        assert!(FitnessWeights::new(1.2, -0.1, -0.1).is_err());
        assert!(FitnessWeights::new(0.1 + 0.2, 0.7, 0.0).is_ok());
    }

    #[test]
    fn presets_valid() {
        for (name, w) in FitnessWeights::presets() {
            assert_eq!(FitnessWeights::preset(name), Some(w));
        }
        assert_eq!(FitnessWeights::preset("nope"), None);
    }

    #[test]
    fn empty_eval_set_rejected() {
        let empty = Dataset::new(vec![], vec![]).unwrap();
        assert!(fitness(&dense(), &FitnessWeights::balanced(), &empty).is_err());
    }
}
