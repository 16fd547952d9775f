//! Synthetic observation generation for the benchmark models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Standard deviation of generated observations.
pub const OBSERVATION_STD: f64 = 2.0;

/// Draws `node_count` i.i.d. Normal(0, 2²) observations from the seed.
pub fn generate_observations(node_count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..node_count)
        .map(|_| OBSERVATION_STD * rng.sample::<f64, _>(StandardNormal))
        .collect()
}
