//! Deterministic random number streams.
//!
//! All sampling in the crate goes through ChaCha8, a counter-based generator
//! with identical output on every platform. Independent streams are derived
//! from a root seed with a SplitMix64 mix so that per-record generators can
//! be created in any order (including in parallel) without changing the
//! sampled bytes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used to derive child seeds from (seed, stream id).
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the given stream of the root seed.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream_id))
}
