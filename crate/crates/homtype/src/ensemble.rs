//! Seeded random function families for the certification harnesses.
//!
//! Three families, mixed by [`standard_ensemble`]: sparse wavelet-coefficient
//! functions, point masses smoothed by a projection kernel, and dense
//! sign-random coefficient functions. Everything is deterministic in the
//! seed.

use crate::dyadic::DyadicTree;
use crate::seq::CoefficientSequence;
use crate::space::QuasiMetricSpace;
use crate::util::subseed;
use crate::wavelets::{synthesize, LevelKernels, WaveletBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    SparseCoefficients,
    SmoothedDelta,
    DenseSignCoefficients,
}

pub fn generate(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    basis: &WaveletBasis,
    kernels: &LevelKernels,
    kind: Kind,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        Kind::SparseCoefficients => {
            let mut lam = CoefficientSequence::zeros(tree);
            let m = lam.wavelet.len();
            let hits = (m / 8).max(1);
            for _ in 0..hits {
                let i = rng.random_range(0..m);
                lam.wavelet[i] = rng.random_range(-1.0f64..1.0);
            }
            synthesize(space, tree, basis, &lam).expect("sequence bound to its own tree")
        }
        Kind::SmoothedDelta => {
            let z = rng.random_range(0..space.n());
            let k = rng.random_range(tree.k_min()..=tree.k_max());
            let mut delta_fn = vec![0.0; space.n()];
            delta_fn[z] = 1.0 / space.weight(z);
            LevelKernels::apply(space, kernels.projection(k), &delta_fn)
        }
        Kind::DenseSignCoefficients => {
            let mut lam = CoefficientSequence::zeros(tree);
            for v in lam.wavelet.iter_mut() {
                *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            let scale = rng.random_range(0.1f64..2.0);
            for v in lam.wavelet.iter_mut() {
                *v *= scale;
            }
            synthesize(space, tree, basis, &lam).expect("sequence bound to its own tree")
        }
    }
}

/// A mixed ensemble cycling through the three families.
pub fn standard_ensemble(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    basis: &WaveletBasis,
    kernels: &LevelKernels,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let kind = match i % 3 {
                0 => Kind::SparseCoefficients,
                1 => Kind::SmoothedDelta,
                _ => Kind::DenseSignCoefficients,
            };
            generate(space, tree, basis, kernels, kind, subseed(seed, "ensemble", i as u64))
        })
        .collect()
}
