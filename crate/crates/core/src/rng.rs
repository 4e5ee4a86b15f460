//! Seeded random streams.
//!
//! Every stochastic routine takes either an explicit seed or a caller-owned
//! generator. Sub-streams (per tree, per chain, per sweep) are derived from a
//! parent seed and an index path so that parallel and sequential execution
//! draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and an index path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, path: &[u64]) -> StreamRng {
    rng_from_seed(derive_seed(seed, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a: u64 = derived_rng(7, &[1, 2]).random();
        let b: u64 = derived_rng(7, &[1, 2]).random();
        let c: u64 = derived_rng(7, &[2, 1]).random();
        let d: u64 = derived_rng(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
