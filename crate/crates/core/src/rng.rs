//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed
//! by a master seed and a stream label, so streams never interfere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with any number of discriminators.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix(seed), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

/// Uniform draw in [0, 1) that depends only on the key.
pub fn unit(seed: u64, parts: &[u64]) -> f64 {
    (derive(seed, parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream labels used across the crate.
pub mod label {
    pub const GENERATOR: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SELECTION: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
}
