//! Deterministic RNG streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream derived from
//! the master seed plus a list of integer labels (generation index, candidate
//! index, trajectory index, ...). Repeating a run with the same master seed
//! therefore reproduces every rollout bit for bit, and independent streams
//! never share state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; full 64-bit avalanche.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses `(seed, labels)` into a single well-mixed u64.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    let mut acc = mix(seed ^ 0x6a09_e667_f3bc_c908);
    for &l in labels {
        acc = mix(acc ^ mix(l));
    }
    acc
}

/// A fresh ChaCha8 stream for `(seed, labels)`.
pub fn stream(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, labels))
}
