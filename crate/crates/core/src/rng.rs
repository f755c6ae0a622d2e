//! Keyed RNG streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is
//! a hash of a base seed and the identifiers of the work item (subset size,
//! Monte Carlo cell, replication). Streams never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of `seed` and `keys`.
pub fn stream_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(seed), |h, &k| {
        splitmix64(h.wrapping_mul(0xD605_BBB5_8C8A_BBB5) ^ splitmix64(k))
    })
}

pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, keys))
}
