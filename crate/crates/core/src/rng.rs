//! Seeded randomness. Every consumer derives its generator from
//! `(seed, stream)`, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent seed for item `index` of a seeded collection.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    rng_for(seed, index).next_u64()
}
