//! Per-stage seed derivation.
//!
//! Every random choice in the pipeline draws from a generator seeded with
//! `derive(global_seed, &[stage, ...])`. The mixer is SplitMix64 applied over
//! the FNV-1a hash of each tag, so seeds are stable across platforms and
//! releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Derives a child seed from `base` and a path of string tags.
pub fn derive(base: u64, tags: &[&str]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, tag| splitmix64(acc ^ fnv1a(tag.as_bytes())))
}

/// Derives a child seed from `base` and an integer index (fold, tree, candidate...).
pub fn derive_index(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
