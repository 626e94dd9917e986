//! Deterministic sub-seed derivation.
//!
//! Every random draw in the crate flows from a single `u64` seed. Child seeds
//! are derived with a SplitMix64 mix of the parent and a stream tag, so work
//! can be scheduled in any order without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Child seed for a path of stream tags, e.g. `[sample_size, replicate, method]`.
pub fn derive_path(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |acc, &tag| derive_seed(acc, tag))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags that keep independent consumers of one seed apart.
pub(crate) const STREAM_PLAN: u64 = 0x504C_414E;
pub(crate) const STREAM_SPLIT: u64 = 0x5350_4C54;
pub(crate) const STREAM_DATA: u64 = 0x4441_5441;
pub(crate) const STREAM_POPULATION: u64 = 0x504F_5055;
pub(crate) const STREAM_METHOD: u64 = 0x4D45_5448;
