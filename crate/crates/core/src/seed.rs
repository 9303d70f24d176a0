//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default seed for every stochastic command.
pub const DEFAULT_SEED: u64 = 42;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices (epoch, item, ...).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
