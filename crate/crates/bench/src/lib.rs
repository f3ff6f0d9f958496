//! Seeded fixture builders shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trunctest_core::f2::Point;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `t` uniform points of dimension `n`.
pub fn uniform_points(n: usize, t: u64, seed: u64) -> Vec<Point> {
    let mut rng = rng(seed);
    (0..t).map(|_| Point::random_uniform(n, &mut rng)).collect()
}
