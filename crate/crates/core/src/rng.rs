//! Seed derivation for independent, counter-keyed random streams.
//!
//! Every stochastic step (a dataset sample, an epoch's subsample, one dropout
//! layer in one batch) draws from its own ChaCha stream whose seed is a hash of
//! the master seed and the step's integer keys. Streams therefore do not depend
//! on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an ordered list of keys into a single seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(master), |acc, &k| {
        splitmix64(acc ^ splitmix64(k))
    })
}

pub fn stream(master: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, keys))
}

/// Domain tags keep streams for unrelated purposes apart.
pub mod tag {
    pub const SAMPLE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const MC: u64 = 7;
    pub const GRADCHECK: u64 = 8;
}
