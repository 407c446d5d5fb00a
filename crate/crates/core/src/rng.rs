//! Seed derivation.
//!
//! A run owns one ChaCha8 key derived from its seed. Each (step, phase) pair
//! reads from its own stream at a fixed word offset, so the draws of one
//! phase never shift the draws of another. Trial seeds are derived from a
//! root seed by index, so batch results do not depend on worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `root`: `mix64(root ^ mix64(index))`.
pub fn trial_seed(root: u64, index: u64) -> u64 {
    mix64(root ^ mix64(index))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Init = 0,
    Migration = 1,
    Birth = 2,
    Death = 3,
}

/// Counter-addressable generator for one run.
#[derive(Clone, Debug)]
pub struct RunRng {
    seed: u64,
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for `phase` at `step`: stream = phase, word offset = `step << 32`.
    pub fn phase(&self, step: u64, phase: Phase) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(phase as u64);
        rng.set_word_pos(u128::from(step) << 32);
        rng
    }
}
