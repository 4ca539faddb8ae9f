//! Seed derivation for reproducible sweeps.
//!
//! Every random draw in the crate is made from a `ChaCha8Rng` seeded with a
//! `u64`. Sweeps never share a generator between realizations: realization
//! `k` of a sweep with base seed `s` uses `realization_seed(s, k)`, and the
//! independent pieces of one realization (topology, channel draw, auction
//! initial state) use `stream_seed(realization_seed, stream)`. Any subset of
//! a sweep can therefore be re-run on its own.
//!
//! Both functions are SplitMix64 finalizers applied to
//! `base + (index + 1) * 0x9E3779B97F4A7C15` (wrapping arithmetic).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent random streams within one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology = 1,
    Channel = 2,
    AuctionInit = 3,
    OracleStart = 4,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn realization_seed(base: u64, index: u64) -> u64 {
    mix(base, index)
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    mix(seed ^ 0x5EED_0000_0000_0000, stream as u64)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
