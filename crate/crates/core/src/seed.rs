//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream seeded with a
//! `u64`. Sub-seeds are derived from a master seed and a tag path with
//! SplitMix64 mixing, so each (subject, DoF, purpose) gets an independent,
//! reproducible stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a sequence of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |acc, &t| {
        splitmix64(acc ^ splitmix64(t))
    })
}

/// Uniform draw in (0, 1].
pub(crate) fn open_unit<R: rand::Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}
