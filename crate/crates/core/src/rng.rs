//! Seed derivation. Every stochastic step draws from a ChaCha stream keyed by
//! an explicit seed plus coordinates (layer, round, shard), so runs are replayable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a list of coordinates into a new seed.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for one worker in one round.
pub fn stream_rng(seed: u64, round: usize, shard_id: usize) -> ChaCha8Rng {
    seeded(derive_seed(seed, &[round as u64, shard_id as u64]))
}
