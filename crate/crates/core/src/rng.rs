//! Seeded substreams.
//!
//! `(seed, stream)` maps to an independent ChaCha8 keystream so that chunked
//! Monte Carlo loops give identical draws no matter how chunks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of draws taken from one substream by the chunked samplers.
pub const CHUNK: usize = 4096;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th independent run derived from a master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
