//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator. A master
//! seed plus a stream id selects an independent, portable sequence:
//! `ChaCha8Rng::seed_from_u64(seed)` followed by `set_stream(stream)`.
//! Sub-tasks (replicas, decimation trials, restarts) take consecutive stream
//! ids so that results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and an index (splitmix64 mix).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
