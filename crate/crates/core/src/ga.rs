//! The pruning GA: mutate a pretrained network into an initial population,
//! then repeat truncation selection, microbial crossover and mutation with
//! elitism. Every `retrain_interval` generations the elite is retrained
//! under frozen masks and the population is rebuilt from its mutants.

use std::sync::Arc;
use std::time::{Duration, Instant};

use log::info;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::genome::{apply_masks, mutate, propagate_masks, Genome};
use crate::metrics::{evaluate, FitnessWeights, Metrics};
use crate::mnist::Dataset;
use crate::nn::{train_masked, NetworkArch, Params, TrainConfig};
use crate::rng::{Operator, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    /// Population size N.
    pub population: usize,
    /// Parents kept by selection, K.
    pub selected: usize,
    pub crossover_rate: f64,
    /// Per-filter kill probability in conv layers.
    pub conv_mutation_rate: f64,
    /// Per-connection kill probability in FC layers.
    pub fc_mutation_rate: f64,
    /// Retrain the elite every this many generations (T).
    pub retrain_interval: usize,
    /// Hard cap on generations (G).
    pub max_generations: usize,
    /// Stop once the retrained elite improved by less than
    /// `convergence_epsilon` over this many retrain cycles.
    pub convergence_window: usize,
    pub convergence_epsilon: f64,
    pub retrain: TrainConfig,
    pub final_retrain: TrainConfig,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 30,
            selected: 5,
            crossover_rate: 0.6,
            conv_mutation_rate: 0.1,
            fc_mutation_rate: 0.15,
            retrain_interval: 5,
            max_generations: 100,
            convergence_window: 3,
            convergence_epsilon: 0.001,
            retrain: TrainConfig::retrain(),
            final_retrain: TrainConfig::final_retrain(),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.population >= 1,
            Config,
            "population size must be at least 1"
        );
        ensure!(
            (1..=self.population).contains(&self.selected),
            Config,
            "selected genomes K = {} must lie in 1..={}",
            self.selected,
            self.population
        );
        for (name, p) in [
            ("crossover rate", self.crossover_rate),
            ("conv mutation rate", self.conv_mutation_rate),
            ("fc mutation rate", self.fc_mutation_rate),
        ] {
            ensure!(
                (0.0..=1.0).contains(&p),
                Config,
                "{name} {p} must lie in [0, 1]"
            );
        }
        ensure!(
            self.retrain_interval >= 1,
            Config,
            "retrain interval must be at least 1"
        );
        ensure!(
            self.max_generations >= 1,
            Config,
            "generation count must be at least 1"
        );
        ensure!(
            self.convergence_window >= 1,
            Config,
            "convergence window must be at least 1"
        );
        ensure!(
            self.convergence_epsilon >= 0.0,
            Config,
            "convergence threshold must be non-negative"
        );
        self.retrain.validate()?;
        self.final_retrain.validate()
    }

    pub fn streams(&self) -> RngStream {
        RngStream::new(self.seed)
    }
}

/// What fitness is measured against: the scalarization weights, the set used
/// for retraining, and the held-out set that drives selection.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub weights: FitnessWeights,
    pub fit: &'a Dataset,
    pub validation: &'a Dataset,
}

#[derive(Debug, Clone)]
pub struct Population {
    generation: usize,
    genomes: Vec<Genome>,
    metrics: Vec<Metrics>,
    elite: usize,
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

impl Population {
    /// Evaluates every genome (concurrently) and locates the elite.
    pub fn evaluate(
        generation: usize,
        mut genomes: Vec<Genome>,
        objective: &Objective,
    ) -> Result<Self> {
        ensure!(!genomes.is_empty(), InvalidInput, "empty population");
        let metrics = genomes
            .par_iter_mut()
            .map(|g| evaluate(g, &objective.weights, objective.validation))
            .collect::<Result<Vec<_>>>()?;
        let fitness: Vec<f64> = metrics.iter().map(|m| m.fitness).collect();
        Ok(Self {
            generation,
            elite: argmin(&fitness),
            genomes,
            metrics,
        })
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn genomes(&self) -> &[Genome] {
        &self.genomes
    }

    pub fn metrics(&self) -> &[Metrics] {
        &self.metrics
    }

    pub fn fitness(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.fitness).collect()
    }

    pub fn len(&self) -> usize {
        self.genomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genomes.is_empty()
    }

    pub fn elite_index(&self) -> usize {
        self.elite
    }

    pub fn elite(&self) -> &Genome {
        &self.genomes[self.elite]
    }

    pub fn elite_metrics(&self) -> Metrics {
        self.metrics[self.elite]
    }

    pub fn mean_fitness(&self) -> f64 {
        self.metrics.iter().map(|m| m.fitness).sum::<f64>() / self.metrics.len() as f64
    }
}

/// Elite statistics after one generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub elite: Metrics,
    pub mean_fitness: f64,
    /// Whether the population was rebuilt from a retrained elite this generation.
    pub retrained: bool,
    /// Wall-clock time since the run started.
    pub elapsed: Duration,
}

impl GenerationRecord {
    /// Equality of everything except the wall-clock timestamp, bit for bit.
    pub fn same_outcome(&self, other: &GenerationRecord) -> bool {
        let bits = |r: &GenerationRecord| {
            (
                r.generation,
                r.retrained,
                r.elite.error.to_bits(),
                r.elite.flops_remaining.to_bits(),
                r.elite.sparsity.to_bits(),
                r.elite.fitness.to_bits(),
                r.mean_fitness.to_bits(),
            )
        };
        bits(self) == bits(other)
    }
}

fn check_pretrained(g: &Genome) -> Result<()> {
    ensure!(
        g.is_dense(),
        InvalidInput,
        "the starting network must be dense (all masks set)"
    );
    ensure!(
        g.params()
            .layers
            .iter()
            .any(|l| l.weights.as_slice().iter().any(|&w| w != 0.0)),
        InvalidInput,
        "the starting network has all-zero weights; pretrain it first"
    );
    Ok(())
}

/// `N` independent mutations of the pretrained network.
pub fn init_population(
    pretrained: &Genome,
    cfg: &GaConfig,
    objective: &Objective,
) -> Result<Population> {
    cfg.validate()?;
    check_pretrained(pretrained)?;
    let streams = cfg.streams();
    let genomes = (0..cfg.population)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(0, i as u64, Operator::Init);
            mutate(
                pretrained,
                cfg.conv_mutation_rate,
                cfg.fc_mutation_rate,
                &mut rng,
            )
        })
        .collect();
    Population::evaluate(0, genomes, objective)
}

/// Indices of the `k` lowest fitness values, ascending; ties by lower index.
pub fn select_by_fitness(fitness: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn select(pop: &Population, k: usize) -> Vec<usize> {
    select_by_fitness(&pop.fitness(), k)
}

/// Offspring starts as a copy of `loser`; layer `m` is taken from `winner`
/// whenever `copy(m)` is true. Masks are then propagated and applied.
pub fn crossover_genes(
    winner: &Genome,
    loser: &Genome,
    mut copy: impl FnMut(usize) -> bool,
) -> Result<Genome> {
    winner.arch().ensure_same(loser.arch())?;
    let mut child = loser.clone();
    for layer in 0..child.layer_count() {
        if copy(layer) {
            child.set_layer(layer, winner);
        }
    }
    Ok(apply_masks(&propagate_masks(&child)))
}

/// Microbial crossover: each gene of the loser is replaced by the winner's
/// with probability 1/2. The winner is not modified.
pub fn microbial_crossover<R: Rng>(winner: &Genome, loser: &Genome, rng: &mut R) -> Result<Genome> {
    crossover_genes(winner, loser, |_| rng.gen_bool(0.5))
}

/// How one offspring slot is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parentage {
    /// Copy of one parent.
    Clone(usize),
    /// Microbial crossover of two distinct parents (population indices).
    Cross { winner: usize, loser: usize },
}

/// Draws parent A uniformly; with probability `crossover_rate` (and at
/// least two parents) draws a distinct parent B and orders the pair by
/// fitness, lower index winning ties.
pub fn plan_slot<R: Rng>(
    parents: &[usize],
    fitness: &[f64],
    crossover_rate: f64,
    rng: &mut R,
) -> Parentage {
    let a = parents[rng.gen_range(0..parents.len())];
    if parents.len() < 2 || rng.gen::<f64>() >= crossover_rate {
        return Parentage::Clone(a);
    }
    let others: Vec<usize> = parents.iter().copied().filter(|&p| p != a).collect();
    let b = others[rng.gen_range(0..others.len())];
    let a_wins = fitness[a] < fitness[b] || (fitness[a] == fitness[b] && a < b);
    if a_wins {
        Parentage::Cross {
            winner: a,
            loser: b,
        }
    } else {
        Parentage::Cross {
            winner: b,
            loser: a,
        }
    }
}

/// Fills `N − 1` offspring slots from the selected parents (unmutated).
pub fn reproduce(pop: &Population, parents: &[usize], cfg: &GaConfig) -> Result<Vec<Genome>> {
    ensure!(!parents.is_empty(), InvalidInput, "no parents selected");
    let streams = cfg.streams();
    let generation = (pop.generation + 1) as u64;
    let fitness = pop.fitness();
    (0..cfg.population.saturating_sub(1))
        .into_par_iter()
        .map(|slot| {
            let mut rng = streams.rng(generation, slot as u64, Operator::Reproduce);
            match plan_slot(parents, &fitness, cfg.crossover_rate, &mut rng) {
                Parentage::Clone(a) => Ok(pop.genomes[a].clone()),
                Parentage::Cross { winner, loser } => {
                    let mut rng = streams.rng(generation, slot as u64, Operator::Crossover);
                    microbial_crossover(&pop.genomes[winner], &pop.genomes[loser], &mut rng)
                }
            }
        })
        .collect()
}

/// One generation: keep the elite unchanged, fill the other `N − 1` slots
/// with mutated offspring of the top `K`, and re-evaluate.
pub fn step(pop: &Population, cfg: &GaConfig, objective: &Objective) -> Result<Population> {
    let parents = select(pop, cfg.selected);
    let offspring = reproduce(pop, &parents, cfg)?;
    let streams = cfg.streams();
    let generation = pop.generation + 1;
    let mutated: Vec<Genome> = offspring
        .into_par_iter()
        .enumerate()
        .map(|(slot, g)| {
            let mut rng = streams.rng(generation as u64, slot as u64, Operator::Mutate);
            mutate(&g, cfg.conv_mutation_rate, cfg.fc_mutation_rate, &mut rng)
        })
        .collect();
    let mut genomes = Vec::with_capacity(cfg.population);
    genomes.push(pop.elite().clone());
    genomes.extend(mutated);
    Population::evaluate(generation, genomes, objective)
}

/// Retrains the elite with its masks frozen, then rebuilds the population
/// as the trained elite plus `N − 1` of its mutants.
pub fn retrain_and_reseed(
    pop: &Population,
    cfg: &GaConfig,
    objective: &Objective,
) -> Result<Population> {
    let streams = cfg.streams();
    let generation = pop.generation as u64;
    let trained = retrain(
        pop.elite(),
        &cfg.retrain,
        objective.fit,
        &mut streams.rng(generation, 0, Operator::Retrain),
    )?;
    let mutants: Vec<Genome> = (1..cfg.population)
        .into_par_iter()
        .map(|slot| {
            let mut rng = streams.rng(generation, slot as u64, Operator::Reseed);
            mutate(
                &trained,
                cfg.conv_mutation_rate,
                cfg.fc_mutation_rate,
                &mut rng,
            )
        })
        .collect();
    let mut genomes = Vec::with_capacity(cfg.population);
    genomes.push(trained);
    genomes.extend(mutants);
    Population::evaluate(pop.generation, genomes, objective)
}

/// Initializes a dense network from `seed` and trains it on `data`.
pub fn pretrain(
    arch: Arc<NetworkArch>,
    data: &Dataset,
    train: &TrainConfig,
    seed: u64,
) -> Result<Genome> {
    let streams = RngStream::new(seed);
    let params = Params::init(&arch, &mut streams.rng(0, 0, Operator::Pretrain));
    let start = Genome::dense(arch, params)?;
    retrain(
        &start,
        train,
        data,
        &mut streams.rng(0, 1, Operator::Pretrain),
    )
}

/// Trains a genome's weights under its own (frozen) masks.
pub fn retrain<R: Rng>(
    g: &Genome,
    train: &TrainConfig,
    data: &Dataset,
    rng: &mut R,
) -> Result<Genome> {
    let params = train_masked(g.arch(), g.params(), g.masks(), data, train, rng)?;
    g.with_params(params)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The final elite after its last retraining.
    pub elite: Genome,
    pub records: Vec<GenerationRecord>,
    /// Whether the convergence rule ended the run before the generation cap.
    pub converged: bool,
}

/// Runs the whole GA, calling `on_record` after every generation.
pub fn run(
    pretrained: &Genome,
    cfg: &GaConfig,
    objective: &Objective,
    mut on_record: impl FnMut(&GenerationRecord, &Population),
) -> Result<RunOutcome> {
    cfg.validate()?;
    if objective.fit.is_empty() || objective.validation.is_empty() {
        return Err(Error::InvalidInput(
            "both the fit and validation sets must be nonempty".into(),
        ));
    }
    let start = Instant::now();
    let mut pop = init_population(pretrained, cfg, objective)?;
    let mut records = Vec::with_capacity(cfg.max_generations);
    let mut retrained_fitness = Vec::new();
    let mut converged = false;
    for g in 1..=cfg.max_generations {
        pop = step(&pop, cfg, objective)?;
        let retrained = g % cfg.retrain_interval == 0;
        if retrained {
            pop = retrain_and_reseed(&pop, cfg, objective)?;
            retrained_fitness.push(pop.metrics()[0].fitness);
        }
        let record = GenerationRecord {
            generation: g,
            elite: pop.elite_metrics(),
            mean_fitness: pop.mean_fitness(),
            retrained,
            elapsed: start.elapsed(),
        };
        info!(
            "generation {g}: f={:.5} e={:.4} c={:.4} s={:.4} mean_f={:.5}{}",
            record.elite.fitness,
            record.elite.error,
            record.elite.flops_remaining,
            record.elite.sparsity,
            record.mean_fitness,
            if retrained { " (retrained)" } else { "" }
        );
        on_record(&record, &pop);
        records.push(record);
        let w = cfg.convergence_window;
        if retrained && retrained_fitness.len() > w {
            let n = retrained_fitness.len();
            if retrained_fitness[n - 1 - w] - retrained_fitness[n - 1] < cfg.convergence_epsilon {
                info!("converged after {g} generations");
                converged = true;
                break;
            }
        }
    }
    let final_gen = records.last().map_or(0, |r| r.generation) as u64 + 1;
    let elite = retrain(
        pop.elite(),
        &cfg.final_retrain,
        objective.fit,
        &mut cfg.streams().rng(final_gen, 0, Operator::Retrain),
    )?;
    Ok(RunOutcome {
        elite,
        records,
        converged,
    })
}
