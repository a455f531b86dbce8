//! Deterministic random-number streams.
//!
//! Every replicate draws from its own ChaCha12 stream derived from the
//! experiment seed and the replicate index, so results are independent of
//! worker count and of the order in which replicates are scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream for replicate `index` of an experiment with the given seed.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a sub-seed for nested fan-out (for example one seed per spine
/// skeleton, with resamples as streams under it). SplitMix64 finalizer.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
