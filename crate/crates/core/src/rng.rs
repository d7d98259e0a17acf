//! Deterministic seed derivation.
//!
//! Every random draw in a run flows from one 64-bit base seed. Independent
//! streams (initial-state draws, minibatch order, bootstrap resampling, ...)
//! are split off by mixing the base seed with a stream tag and an index, so
//! adding a new consumer never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Values are arbitrary but fixed forever.
pub mod stream {
    pub const EXPERT_DATA: u64 = 0x01;
    pub const CALIBRATION: u64 = 0x02;
    pub const TRAIN_ROLLOUT: u64 = 0x03;
    pub const EVAL: u64 = 0x04;
    pub const SGD: u64 = 0x05;
    pub const RANDOM_RATE: u64 = 0x06;
    pub const ENSEMBLE: u64 = 0x07;
    pub const EXPERT_EVAL: u64 = 0x08;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(base, tag, index)`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(base: u64, tag: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(base, tag, index))
}
