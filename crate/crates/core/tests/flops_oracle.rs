mod common;

use std::sync::Arc;

use common::{brute_force_macs, random_genome, small_arch};
use evoprune::genome::mutate;
use evoprune::metrics::count_flops;
use evoprune::nn::{NetworkArch, Params};
use evoprune::Genome;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn count_matches_walker_on_random_small_genomes() {
    let arch = Arc::new(small_arch());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..200 {
        let g = random_genome(&arch, &mut rng);
        let fast = count_flops(&g).unwrap();
        assert_eq!(fast.remaining, brute_force_macs(&g), "genome {i}");
    }
}

#[test]
fn dense_count_matches_walker() {
    let arch = Arc::new(small_arch());
    let g = Genome::dense(arch.clone(), Params::zeros(&arch)).unwrap();
    let f = count_flops(&g).unwrap();
    assert_eq!(f.remaining, f.dense);
    assert_eq!(f.dense, brute_force_macs(&g));
    // 4·9·144 + 5·36·16 + 6·20 + 10·6
    assert_eq!(f.dense, 5184 + 2880 + 120 + 60);
}

#[test]
fn lenet_mutants_match_walker() {
    let arch = Arc::new(NetworkArch::lenet());
    let dense = Genome::dense(arch.clone(), Params::zeros(&arch)).unwrap();
    assert_eq!(brute_force_macs(&dense), 2_293_000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let g = mutate(&dense, 0.3, 0.5, &mut rng);
        assert_eq!(count_flops(&g).unwrap().remaining, brute_force_macs(&g));
    }
}
