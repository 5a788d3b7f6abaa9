//! Seed plumbing for reproducible runs.

use rand::rngs::StdRng;
use rand::SeedableRng;

/// Construct the crate's standard seeded generator.
pub fn seeded_rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Derive an independent stream seed from a base seed and a stream id.
///
/// SplitMix64 finalizer over `base + stream * golden`, so nearby base seeds
/// and stream ids land far apart in seed space.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
