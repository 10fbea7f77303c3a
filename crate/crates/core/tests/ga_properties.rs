mod common;

use std::sync::Arc;

use common::small_arch;
use evoprune::ga::{
    self, init_population, microbial_crossover, plan_slot, step, GaConfig, Objective, Parentage,
};
use evoprune::metrics::count_sparsity;
use evoprune::mnist::{Dataset, IMAGE_LEN};
use evoprune::nn::{NetworkArch, Params, TrainConfig};
use evoprune::{FitnessWeights, Genome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..n * IMAGE_LEN)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    Dataset::new(images, (0..n).map(|i| (i % 10) as u8).collect()).unwrap()
}

fn lenet_genome(seed: u64) -> Genome {
    let arch = Arc::new(NetworkArch::lenet());
    Genome::dense(
        arch.clone(),
        Params::init(&arch, &mut ChaCha8Rng::seed_from_u64(seed)),
    )
    .unwrap()
}

/// Expected masked weights of one mutant of a dense LeNet:
/// conv1 filters die with p; a conv2 kernel slice dies if its filter or its
/// input channel dies; an fc1 weight dies if its source channel dies or it
/// is hit directly; fc2 weights only by direct hits.
fn expected_initial_sparsity(p_mc: f64, p_mf: f64) -> f64 {
    let conv1 = 500.0 * p_mc;
    let conv2 = 25_000.0 * (1.0 - (1.0 - p_mc) * (1.0 - p_mc));
    let fc1 = 400_000.0 * (1.0 - (1.0 - p_mc) * (1.0 - p_mf));
    let fc2 = 5_000.0 * p_mf;
    (conv1 + conv2 + fc1 + fc2) / 430_500.0
}

#[test]
fn initial_population_sparsity_matches_expectation() {
    let data = random_data(10, 0);
    let obj = Objective {
        weights: FitnessWeights::balanced(),
        fit: &data,
        validation: &data,
    };
    let cfg = GaConfig::default();
    let pop = init_population(&lenet_genome(1), &cfg, &obj).unwrap();
    assert_eq!(pop.len(), 30);
    let mean = pop.genomes().iter().map(count_sparsity).sum::<f64>() / 30.0;
    let expected = expected_initial_sparsity(0.1, 0.15);
    assert!(
        (mean - expected).abs() < 0.02,
        "mean {mean} expected {expected}"
    );
    for (i, a) in pop.genomes().iter().enumerate() {
        for b in &pop.genomes()[i + 1..] {
            assert!(!a.bit_identical(b));
        }
    }
}

#[test]
fn single_genome_population() {
    let data = random_data(10, 0);
    let obj = Objective {
        weights: FitnessWeights::balanced(),
        fit: &data,
        validation: &data,
    };
    let cfg = GaConfig {
        population: 1,
        selected: 1,
        ..GaConfig::default()
    };
    let pop = init_population(&lenet_genome(2), &cfg, &obj).unwrap();
    assert_eq!(pop.len(), 1);
    assert!(!pop.genomes()[0].is_dense());
}

#[test]
fn crossover_copies_each_gene_half_the_time() {
    let arch = Arc::new(small_arch());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let winner = Genome::dense(arch.clone(), Params::init(&arch, &mut rng)).unwrap();
    let loser = Genome::dense(arch.clone(), Params::init(&arch, &mut rng)).unwrap();
    let trials = 10_000;
    let mut copies = [0usize; 4];
    for _ in 0..trials {
        let child = microbial_crossover(&winner, &loser, &mut rng).unwrap();
        for (l, count) in copies.iter_mut().enumerate() {
            let from_winner = child.params().layers[l] == winner.params().layers[l];
            let from_loser = child.params().layers[l] == loser.params().layers[l];
            assert!(from_winner ^ from_loser);
            *count += usize::from(from_winner);
        }
    }
    for (l, &c) in copies.iter().enumerate() {
        let rate = c as f64 / trials as f64;
        assert!((rate - 0.5).abs() <= 0.02, "layer {l}: copy rate {rate}");
    }
}

#[test]
fn crossover_application_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fitness = [0.5, 0.1, 0.3, 0.2, 0.4];
    let parents = [1, 3, 2, 4, 0];
    let trials = 20_000;
    let crossed = (0..trials)
        .filter(|_| {
            matches!(
                plan_slot(&parents, &fitness, 0.6, &mut rng),
                Parentage::Cross { .. }
            )
        })
        .count();
    let rate = crossed as f64 / trials as f64;
    assert!((rate - 0.6).abs() <= 0.02, "{rate}");
}

#[test]
fn elite_fitness_never_increases_over_50_steps() {
    let arch = Arc::new(NetworkArch::lenet());
    let data = random_data(60, 5);
    let obj = Objective {
        weights: FitnessWeights::balanced(),
        fit: &data,
        validation: &data,
    };
    let cfg = GaConfig {
        population: 10,
        selected: 3,
        ..GaConfig::default()
    };
    let start = ga::pretrain(
        arch,
        &data,
        &TrainConfig {
            batch_size: 20,
            ..TrainConfig::with_epochs(2)
        },
        0,
    )
    .unwrap();
    let mut pop = init_population(&start, &cfg, &obj).unwrap();
    for _ in 0..50 {
        let next = step(&pop, &cfg, &obj).unwrap();
        assert!(next.elite_metrics().fitness <= pop.elite_metrics().fitness);
        assert!(next.genomes()[0].bit_identical(pop.elite()));
        assert!(next.genomes().iter().all(Genome::masks_consistent));
        pop = next;
    }
}
