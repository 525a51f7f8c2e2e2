//! Counter-based random streams.
//!
//! Every (cell, replication) pair owns an independent ChaCha stream derived
//! from the master seed, so a replication draws the same numbers regardless
//! of which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for a single draw identified by `seed` alone.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for replication `rep` of grid cell `cell` under master `seed`.
pub fn stream(seed: u64, cell: u32, rep: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

/// Derives a 64-bit seed for a (cell, rep) pair, for places that need a
/// plain seed value rather than a generator (e.g. instance metadata).
pub fn derive_seed(seed: u64, cell: u32, rep: u32) -> u64 {
    // splitmix64 finalizer over the packed counter
    let mut z = seed ^ (((cell as u64) << 32) | rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
