//! Deterministic 64-bit seed derivation.
//!
//! Every stream of randomness in the crate is a ChaCha8 generator seeded
//! through [`mix`], a SplitMix64-based combiner. Given the same base seed and
//! tags, any subset of a larger run reproduces identical streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 output step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Combine a base seed with a sequence of tags.
///
/// `mix(s, &[a, b])` chains SplitMix64 over `s`, `a`, `b`; it is the declared
/// mixing function for per-replication and per-stage seed derivation.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &t in tags {
        h = splitmix64(h ^ t.wrapping_add(0xD1B54A32D192ED03));
    }
    h
}

/// ChaCha8 stream for a derived seed.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, tags))
}
