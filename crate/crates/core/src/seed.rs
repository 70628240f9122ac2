//! Seed derivation. Every random draw in the crate goes through a
//! `ChaCha8Rng` seeded from an explicit integer; sub-streams are keyed by
//! mixing the parent seed with a tag so they never depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of integer tags.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(base);
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(GOLDEN)));
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
