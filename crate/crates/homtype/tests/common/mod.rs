//! Shared fixtures and independent oracles for the acceptance suite.
//!
//! The sequence-norm oracles below are straight-loop translations of the
//! norm formulas, deliberately free of the library's compensated-summation
//! and max-factoring machinery.

use homtype::builtin;
use homtype::dyadic::{build_nets, build_tree, DyadicTree};
use homtype::seq::CoefficientSequence;
use homtype::space::QuasiMetricSpace;

pub fn line_tree(n: usize, delta: f64) -> (QuasiMetricSpace, DyadicTree) {
    let s = builtin::line_space(n).unwrap();
    let net = build_nets(&s, delta, 1.0, 1.0).unwrap();
    let t = build_tree(&s, net).unwrap();
    (s, t)
}

pub fn cloud_tree(n: usize, delta: f64) -> (QuasiMetricSpace, DyadicTree) {
    let s = builtin::planar_cloud(n, builtin::CLOUD_SEED).unwrap();
    let net = build_nets(&s, delta, 1.0, 1.0).unwrap();
    let t = build_tree(&s, net).unwrap();
    (s, t)
}

/// Straight-loop homogeneous Besov sequence norm.
pub fn oracle_besov(tree: &DyadicTree, lam: &CoefficientSequence, s: f64, p: f64, q: f64) -> f64 {
    let delta = tree.delta();
    let mut blocks: Vec<f64> = Vec::new();
    for k in tree.k_min()..tree.k_max() {
        let mut sum = 0.0f64;
        let mut sup = 0.0f64;
        for (i, wc) in tree.wavelet_cubes().iter().enumerate() {
            if wc.g_level != k {
                continue;
            }
            let mu = tree.cube_of(wc).mass;
            let v = lam.wavelet[i].abs();
            if p == f64::INFINITY {
                sup = sup.max(mu.powf(-0.5) * v);
            } else {
                sum += mu.powf(1.0 - p / 2.0) * v.powf(p);
            }
        }
        let block = if p == f64::INFINITY { sup } else { sum.powf(1.0 / p) };
        blocks.push(delta.powf(-(k as f64) * s) * block);
    }
    if q == f64::INFINITY {
        blocks.iter().copied().fold(0.0, f64::max)
    } else {
        blocks.iter().map(|b| b.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Straight-loop homogeneous Triebel–Lizorkin sequence norm.
pub fn oracle_tl(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    lam: &CoefficientSequence,
    s: f64,
    p: f64,
    q: f64,
) -> f64 {
    let delta = tree.delta();
    let mut total = 0.0f64;
    for x in 0..space.n() {
        let mut acc = 0.0f64;
        let mut sup = 0.0f64;
        for (i, wc) in tree.wavelet_cubes().iter().enumerate() {
            let cube = tree.cube_of(wc);
            if !cube.members.contains(&x) {
                continue;
            }
            let term = delta.powf(-(wc.g_level as f64) * s) * lam.wavelet[i].abs() / cube.mass.sqrt();
            if q == f64::INFINITY {
                sup = sup.max(term);
            } else {
                acc += term.powf(q);
            }
        }
        let g = if q == f64::INFINITY { sup } else { acc.powf(1.0 / q) };
        total += g.powf(p) * space.weight(x);
    }
    total.powf(1.0 / p)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }
}
