//! Built-in test spaces: a uniform line and a seeded planar cloud.

use crate::space::{build_space, MetricSpec, QuasiMetricSpace};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// n uniform points on a line, spacing 1, unit weights.
pub fn line_space(n: usize) -> Result<QuasiMetricSpace> {
    let ids = (0..n).map(|i| i.to_string()).collect();
    let coords = (0..n).map(|i| vec![i as f64]).collect();
    build_space(ids, Some(coords), &MetricSpec::Euclidean, None, None)
}

/// Fixed seed for the canonical 100-point planar cloud.
pub const CLOUD_SEED: u64 = 0x0c10_0d;

/// n points uniform in the square [0, sqrt(n)]^2, unit weights. With the
/// default seed the 100-point cloud is the second standard test space.
pub fn planar_cloud(n: usize, seed: u64) -> Result<QuasiMetricSpace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt();
    let ids = (0..n).map(|i| i.to_string()).collect();
    let coords = (0..n)
        .map(|_| vec![rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    build_space(ids, Some(coords), &MetricSpec::Euclidean, None, None)
}
