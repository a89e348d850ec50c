//! Seed derivation. Every random stream in a run is keyed by a tuple of
//! integers mixed through SplitMix64, so any stream can be reproduced
//! without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of integers into a single 64-bit seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5241_494c_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Stream tags keep the different consumers of one run seed apart.
pub mod stream {
    pub const DIRECTIONS: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const DISCRIMINATOR: u64 = 3;
    pub const EVALUATION: u64 = 4;
    pub const DEMOS: u64 = 5;
    pub const INIT: u64 = 6;
}

/// Portable ChaCha8 generator for a mixed seed.
pub fn rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}
