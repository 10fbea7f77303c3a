//! Labelled random streams: every (generation, slot, operator) triple gets
//! its own ChaCha stream under one master seed, so results do not depend on
//! evaluation order or parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Init,
    Reproduce,
    Crossover,
    Mutate,
    Reseed,
    Retrain,
    Pretrain,
}

impl Operator {
    fn tag(self) -> u64 {
        match self {
            Operator::Init => 1,
            Operator::Reproduce => 2,
            Operator::Crossover => 3,
            Operator::Mutate => 4,
            Operator::Reseed => 5,
            Operator::Retrain => 6,
            Operator::Pretrain => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn rng(&self, generation: u64, slot: u64, op: Operator) -> ChaCha8Rng {
        let stream = splitmix64(splitmix64(splitmix64(op.tag()) ^ generation) ^ slot);
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(stream);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draw(mut rng: ChaCha8Rng) -> Vec<u64> {
        (0..8).map(|_| rng.gen()).collect()
    }

    #[test]
    fn same_labels_same_sequence() {
        let s = RngStream::new(42);
        assert_eq!(
            draw(s.rng(3, 7, Operator::Mutate)),
            draw(s.rng(3, 7, Operator::Mutate))
        );
    }

    #[test]
    fn labels_separate_streams() {
        let s = RngStream::new(42);
        let base = draw(s.rng(3, 7, Operator::Mutate));
        assert_ne!(base, draw(s.rng(3, 8, Operator::Mutate)));
        assert_ne!(base, draw(s.rng(4, 7, Operator::Mutate)));
        assert_ne!(base, draw(s.rng(3, 7, Operator::Crossover)));
        assert_ne!(base, draw(RngStream::new(43).rng(3, 7, Operator::Mutate)));
    }
}
