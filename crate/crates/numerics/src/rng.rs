//! Deterministic RNG plumbing.
//!
//! Every random draw in the system flows from a single u64 seed through
//! labeled sub-streams, so components can be reordered or parallelized
//! without changing each other's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stateless mix of a seed and a label into an independent stream seed.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let mut h = seed;
    for &b in label.as_bytes() {
        h = splitmix64(h.wrapping_add(b as u64));
    }
    splitmix64(h)
}

/// Sub-stream keyed by a label and an index (e.g. per example).
pub fn sub_seed_indexed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(sub_seed(seed, label).wrapping_add(index))
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, label))
}

pub fn rng_for_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed_indexed(seed, label, index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
