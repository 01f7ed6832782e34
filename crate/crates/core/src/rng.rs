//! Seeding for chains and replicates.
//!
//! Every chain owns a [`ChainRng`] built from a 64-bit seed. Replicate `i`
//! of a study seeded with `s` uses [`replicate_seed(s, i)`](replicate_seed),
//! which is injective in `i` for a fixed `s`: the index is spread by an odd
//! multiplier (a bijection modulo 2^64) and then passed through the
//! SplitMix64 finalizer (also a bijection).

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform draw on the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// Uniform draw from {-1, +1}.
pub fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}
