//! Seeded random streams.
//!
//! Every stochastic operation in the crate draws from a [`SeededRng`], which is
//! ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`). The algorithm is portable
//! and its output for a given seed is fixed, so runs are reproducible across
//! platforms. Independent streams for one seed are obtained with [`stream`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `id` of the generator keyed by `seed`.
pub fn stream(seed: u64, id: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
