//! Seeding for ensemble members.
//!
//! Every lattice realization draws from its own ChaCha8 stream whose seed is
//! derived from `(base seed, ensemble index, abundance)`. Members can be
//! generated in any order, on any thread, and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of ensemble member `index` at abundance `fraction`.
pub fn member_seed(base: u64, index: u64, fraction: f64) -> u64 {
    let mut h = splitmix64(base);
    h = splitmix64(h ^ index);
    splitmix64(h ^ fraction.to_bits())
}

pub(crate) fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
