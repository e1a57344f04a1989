//! Counter-based seed derivation.
//!
//! Every independent unit of randomness (a tree, a repeat, a replicate) gets a
//! seed computed from the master seed and its coordinates, so results never
//! depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for unit `index` of `stream`, derived from `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ stream.rotate_left(17)) ^ index)
}

/// Deterministic generator for one unit.
pub fn unit_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
