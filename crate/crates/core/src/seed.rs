//! Seed derivation.
//!
//! Every random draw in an experiment is keyed by a `u64` derived from the
//! master seed and a path of integers (stream tag, repetition index, ...).
//! Derivation is a chain of SplitMix64 finalizers:
//!
//! ```text
//! h0 = splitmix64(master)
//! h_{k+1} = splitmix64(h_k ^ splitmix64(path[k] + 0x9E3779B97F4A7C15))
//! ```
//!
//! The result depends only on `(master, path)`, never on execution order, so
//! repetitions can run in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `x + GOLDEN_GAMMA`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |h, &p| {
        splitmix64(h ^ splitmix64(p.wrapping_add(GOLDEN_GAMMA)))
    })
}

/// Stream tags used by the experiment harness.
pub mod stream {
    pub const PENETRATION: u64 = 1;
    pub const CORRUPTION: u64 = 2;
}

/// The crate-wide deterministic generator.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
