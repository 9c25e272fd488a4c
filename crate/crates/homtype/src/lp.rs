//! Littlewood–Paley square functions and their equivalence harnesses.
//!
//! All functionals are built from the detail kernels `Q_k` (plus the base
//! projection in the inhomogeneous chain) applied against the measure:
//!
//! * vertical g-function: `g(x) = [sum_k d^{-ksq} |Q_k f(x)|^q]^{1/q}`;
//! * Lusin area function: averages `|Q_k f|^q` over the ball `B(x, d^k)`
//!   normalized by `V_{d^k}(x)`;
//! * aperture variant: ball `B(x, theta d^k)` normalized by `V_{d^k}(y)`;
//! * `g_lambda^*`: full-space sum damped by `[d^k/(d^k+d(x,y))]^lambda` and
//!   normalized by `V_{d^k}(x) + V_{d^k}(y)`.
//!
//! The L^p norm of the g-function IS the Triebel–Lizorkin function norm by
//! definition (same formula, two call sites — see [`f_norm_kernel_path`]);
//! the L^p norms of the area function and of `g_lambda^*` are equivalent to
//! it with constants the equivalence report estimates empirically. The
//! change-of-angle fit checks that the aperture growth of the area function
//! stays below `theta^{w/p}`.

use crate::dyadic::{DyadicTree, Refinement};
use crate::seq::SpaceParams;
use crate::space::QuasiMetricSpace;
use crate::util::{ls_fit, Kahan};
use crate::wavelets::{LevelKernels, WaveletBasis};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

fn qroot(acc: f64, q: f64) -> f64 {
    acc.powf(1.0 / q)
}

/// Detail transforms `Q_k f` for every homogeneous g-level.
fn detail_transforms(space: &QuasiMetricSpace, tree: &DyadicTree, kernels: &LevelKernels, f: &[f64]) -> Vec<Vec<f64>> {
    (tree.k_min()..tree.k_max())
        .map(|k| LevelKernels::apply(space, kernels.detail(k), f))
        .collect()
}

/// Transforms of the inhomogeneous chain: base projection, then details.
fn inhom_transforms(space: &QuasiMetricSpace, tree: &DyadicTree, kernels: &LevelKernels, f: &[f64]) -> Vec<Vec<f64>> {
    let depth = (tree.k_max() - tree.k_min()) as u32;
    (0..=depth)
        .map(|kappa| LevelKernels::apply(space, kernels.inhomogeneous(kappa), f))
        .collect()
}

/// Vertical g-function, homogeneous chain.
pub fn g_function(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    q: f64,
) -> Vec<f64> {
    let transforms = detail_transforms(space, tree, kernels, f);
    let delta = tree.delta();
    (0..space.n())
        .into_par_iter()
        .map(|x| {
            if q == f64::INFINITY {
                transforms
                    .iter()
                    .zip(tree.k_min()..)
                    .map(|(tf, k)| delta.powi(-k).powf(s) * tf[x].abs())
                    .fold(0.0, f64::max)
            } else {
                let mut acc = Kahan::new();
                for (tf, k) in transforms.iter().zip(tree.k_min()..) {
                    acc.add(delta.powi(-k).powf(s * q) * tf[x].abs().powf(q));
                }
                qroot(acc.total(), q)
            }
        })
        .collect()
}

/// Vertical g-function, inhomogeneous chain: refinement-subcube means up to
/// the transition index, plain weighted powers above it.
pub fn g_function_inhom(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    refinement: &Refinement,
    n_cutoff: u32,
    f: &[f64],
    s: f64,
    q: f64,
) -> Vec<f64> {
    let transforms = inhom_transforms(space, tree, kernels, f);
    let depth = (tree.k_max() - tree.k_min()) as u32;
    let n_cut = n_cutoff.min(depth);
    let delta = tree.delta();
    let n = space.n();
    let finite_q = q != f64::INFINITY;
    let mut acc: Vec<Kahan> = vec![Kahan::new(); n];
    let mut sup = vec![0.0f64; n];
    for kappa in 0..=n_cut {
        let k_abs = tree.k_min() + kappa as i32;
        let li = (k_abs - tree.k_min()) as usize;
        let lvl = tree.level(k_abs);
        let target_level = (k_abs + refinement.j0).min(tree.k_max());
        let tf = &transforms[kappa as usize];
        for (ci, _) in lvl.cubes.iter().enumerate() {
            for &sub in &refinement.tables[li][ci] {
                let subcube = &tree.level(target_level).cubes[sub];
                if finite_q {
                    let mut m = Kahan::new();
                    for &y in &subcube.members {
                        m.add(tf[y].abs().powf(q) * space.weight(y));
                    }
                    let mean = m.total() / subcube.mass;
                    for &y in &subcube.members {
                        acc[y].add(mean);
                    }
                } else {
                    let peak = subcube.members.iter().map(|&y| tf[y].abs()).fold(0.0, f64::max);
                    for &y in &subcube.members {
                        sup[y] = sup[y].max(peak);
                    }
                }
            }
        }
    }
    for kappa in (n_cut + 1)..=depth {
        let tf = &transforms[kappa as usize];
        let w = delta.powi(-(kappa as i32)).powf(s);
        for x in 0..n {
            if finite_q {
                acc[x].add((w * tf[x].abs()).powf(q));
            } else {
                sup[x] = sup[x].max(w * tf[x].abs());
            }
        }
    }
    if finite_q {
        acc.iter().map(|a| qroot(a.total(), q)).collect()
    } else {
        sup
    }
}

/// Lusin area function, homogeneous chain.
pub fn lusin_area(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    q: f64,
) -> Vec<f64> {
    let transforms = detail_transforms(space, tree, kernels, f);
    let delta = tree.delta();
    (0..space.n())
        .into_par_iter()
        .map(|x| {
            let mut acc = Kahan::new();
            let mut sup: f64 = 0.0;
            for (tf, k) in transforms.iter().zip(tree.k_min()..) {
                let radius = delta.powi(k);
                let w = delta.powi(-k).powf(s);
                let vol = space.ball_measure(x, radius);
                if q == f64::INFINITY {
                    for y in space.ball_points(x, radius) {
                        sup = sup.max(w * tf[y].abs());
                    }
                } else {
                    let mut inner = Kahan::new();
                    for y in space.ball_points(x, radius) {
                        inner.add(tf[y].abs().powf(q) * space.weight(y));
                    }
                    acc.add(w.powf(q) * inner.total() / vol);
                }
            }
            if q == f64::INFINITY {
                sup
            } else {
                qroot(acc.total(), q)
            }
        })
        .collect()
}

/// Lusin area function, inhomogeneous chain.
pub fn lusin_area_inhom(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    q: f64,
) -> Vec<f64> {
    let transforms = inhom_transforms(space, tree, kernels, f);
    let delta = tree.delta();
    (0..space.n())
        .into_par_iter()
        .map(|x| {
            let mut acc = Kahan::new();
            let mut sup: f64 = 0.0;
            for (kappa, tf) in transforms.iter().enumerate() {
                let radius = delta.powi(tree.k_min() + kappa as i32);
                let w = delta.powi(-(kappa as i32)).powf(s);
                let vol = space.ball_measure(x, radius);
                if q == f64::INFINITY {
                    for y in space.ball_points(x, radius) {
                        sup = sup.max(w * tf[y].abs());
                    }
                } else {
                    let mut inner = Kahan::new();
                    for y in space.ball_points(x, radius) {
                        inner.add(tf[y].abs().powf(q) * space.weight(y));
                    }
                    acc.add(w.powf(q) * inner.total() / vol);
                }
            }
            if q == f64::INFINITY {
                sup
            } else {
                qroot(acc.total(), q)
            }
        })
        .collect()
}

/// Aperture variant of the area function: ball `B(x, theta d^k)` with the
/// inside normalization `V_{d^k}(y)`.
pub fn lusin_area_aperture(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    q: f64,
    theta: f64,
) -> Vec<f64> {
    assert!(theta >= 1.0, "aperture must be at least 1");
    let transforms = detail_transforms(space, tree, kernels, f);
    let delta = tree.delta();
    (0..space.n())
        .into_par_iter()
        .map(|x| {
            let mut acc = Kahan::new();
            let mut sup: f64 = 0.0;
            for (tf, k) in transforms.iter().zip(tree.k_min()..) {
                let radius = delta.powi(k);
                let w = delta.powi(-k).powf(s);
                if q == f64::INFINITY {
                    for y in space.ball_points(x, theta * radius) {
                        sup = sup.max(w * tf[y].abs());
                    }
                } else {
                    let mut inner = Kahan::new();
                    for y in space.ball_points(x, theta * radius) {
                        inner.add(tf[y].abs().powf(q) * space.weight(y) / space.ball_measure(y, radius));
                    }
                    acc.add(w.powf(q) * inner.total());
                }
            }
            if q == f64::INFINITY {
                sup
            } else {
                qroot(acc.total(), q)
            }
        })
        .collect()
}

fn gstar_generic(
    space: &QuasiMetricSpace,
    scales: &[(f64, f64)],
    transforms: &[Vec<f64>],
    q: f64,
    lambda_ap: f64,
) -> Vec<f64> {
    let n = space.n();
    (0..n)
        .into_par_iter()
        .map(|x| {
            let mut acc = Kahan::new();
            let mut sup: f64 = 0.0;
            for ((&(radius, w), tf), _) in scales.iter().zip(transforms).zip(0..) {
                let vx = space.ball_measure(x, radius);
                if q == f64::INFINITY {
                    for y in 0..n {
                        sup = sup.max(w * tf[y].abs());
                    }
                } else {
                    let mut inner = Kahan::new();
                    for y in 0..n {
                        let damp = (radius / (radius + space.dist(x, y))).powf(lambda_ap);
                        inner.add(
                            tf[y].abs().powf(q) * damp * space.weight(y)
                                / (vx + space.ball_measure(y, radius)),
                        );
                    }
                    acc.add(w.powf(q) * inner.total());
                }
            }
            if q == f64::INFINITY {
                sup
            } else {
                qroot(acc.total(), q)
            }
        })
        .collect()
}

/// Weighted full-space square function, homogeneous chain.
pub fn g_lambda_star(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    q: f64,
    lambda_ap: f64,
) -> Vec<f64> {
    assert!(lambda_ap > 0.0);
    let transforms = detail_transforms(space, tree, kernels, f);
    let delta = tree.delta();
    let scales: Vec<(f64, f64)> = (tree.k_min()..tree.k_max())
        .map(|k| (delta.powi(k), delta.powi(-k).powf(s)))
        .collect();
    gstar_generic(space, &scales, &transforms, q, lambda_ap)
}

/// Weighted full-space square function, inhomogeneous chain.
pub fn g_lambda_star_inhom(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    q: f64,
    lambda_ap: f64,
) -> Vec<f64> {
    assert!(lambda_ap > 0.0);
    let transforms = inhom_transforms(space, tree, kernels, f);
    let delta = tree.delta();
    let depth = (tree.k_max() - tree.k_min()) as i32;
    let scales: Vec<(f64, f64)> = (0..=depth)
        .map(|kappa| (delta.powi(tree.k_min() + kappa), delta.powi(-kappa).powf(s)))
        .collect();
    gstar_generic(space, &scales, &transforms, q, lambda_ap)
}

/// The Triebel–Lizorkin function norm computed through the kernel chain —
/// by definition the L^p norm of the g-function, and this call site is
/// exactly that composition.
pub fn f_norm_kernel_path(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    f: &[f64],
    s: f64,
    p: f64,
    q: f64,
) -> f64 {
    space.lp_norm(&g_function(space, tree, kernels, f, s, q), p)
}

/// Pointwise domination constant: the exact sup over realized in-ball
/// triples of the factor turning `g_lambda^*` into a majorant of the area
/// function.
pub fn gstar_domination_constant(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    q: f64,
    lambda_ap: f64,
) -> f64 {
    let delta = tree.delta();
    let mut c: f64 = 0.0;
    for k in tree.k_min()..tree.k_max() {
        let radius = delta.powi(k);
        for x in 0..space.n() {
            let vx = space.ball_measure(x, radius);
            for y in space.ball_points(x, radius) {
                let d = space.dist(x, y);
                let fac = ((radius + d) / radius).powf(lambda_ap / q)
                    * ((vx + space.ball_measure(y, radius)) / vx).powf(1.0 / q);
                c = c.max(fac);
            }
        }
    }
    c
}

/// One ensemble member's norms and ratios.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRow {
    pub wavelet_norm: f64,
    pub area_lp: f64,
    pub gstar_lp: f64,
    pub g_lp: f64,
    /// area_lp / wavelet_norm and gstar_lp / wavelet_norm.
    pub ratio_area: f64,
    pub ratio_gstar: f64,
}

/// Equivalence-band report over an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    /// Smallest C with all ratios inside [1/C, C].
    pub c_emp: f64,
    /// Same over the first half of the ensemble.
    pub c_emp_half: f64,
    /// Lower edge of the admissible aperture-exponent window.
    pub lambda_window_low: f64,
    pub lambda_ap: f64,
    pub out_of_window: bool,
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

/// Norms of the area function and of `g_lambda^*` against the wavelet-side
/// function norm for every ensemble member, with the empirical equivalence
/// band. The params' homogeneity selects the functional chain; the
/// refinement (with the transition cutoff) is needed for the inhomogeneous
/// g-path.
pub fn equivalence_report(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    basis: &WaveletBasis,
    kernels: &LevelKernels,
    refinement: Option<&Refinement>,
    params: &SpaceParams,
    lambda_ap: f64,
    ensemble: &[Vec<f64>],
) -> Result<EquivalenceReport> {
    params.ensure_valid()?;
    let (s, p, q) = (params.s, params.p, params.q);
    let inhom = params.kind.homogeneity == crate::seq::Homogeneity::Inhomogeneous;
    if inhom && refinement.is_none() {
        return Err(Error::InvalidParams("inhomogeneous equivalence report needs the refinement tables".into()));
    }
    let rows: Result<Vec<EquivalenceRow>> = ensemble
        .iter()
        .map(|f| {
            let wavelet_norm = crate::seq::wavelet_function_norm(space, tree, basis, f, params)?;
            let (area, gstar, g_lp) = if inhom {
                let r = refinement.unwrap();
                let cutoff = params.effective_cutoff(tree);
                (
                    lusin_area_inhom(space, tree, kernels, f, s, q),
                    g_lambda_star_inhom(space, tree, kernels, f, s, q, lambda_ap),
                    space.lp_norm(&g_function_inhom(space, tree, kernels, r, cutoff, f, s, q), p),
                )
            } else {
                (
                    lusin_area(space, tree, kernels, f, s, q),
                    g_lambda_star(space, tree, kernels, f, s, q, lambda_ap),
                    f_norm_kernel_path(space, tree, kernels, f, s, p, q),
                )
            };
            let area_lp = space.lp_norm(&area, p);
            let gstar_lp = space.lp_norm(&gstar, p);
            let (ratio_area, ratio_gstar) = if wavelet_norm == 0.0 {
                (0.0, 0.0)
            } else {
                (area_lp / wavelet_norm, gstar_lp / wavelet_norm)
            };
            Ok(EquivalenceRow { wavelet_norm, area_lp, gstar_lp, g_lp, ratio_area, ratio_gstar })
        })
        .collect();
    let rows = rows?;
    let band = |rows: &[EquivalenceRow]| -> f64 {
        rows.iter()
            .flat_map(|r| [r.ratio_area, r.ratio_gstar])
            .filter(|&r| r > 0.0)
            .map(|r| r.max(1.0 / r))
            .fold(1.0, f64::max)
    };
    let c_emp = band(&rows);
    let c_emp_half = band(&rows[..rows.len() / 2]);
    let lambda_window_low = params.omega0.max(q * params.omega0 / p);
    Ok(EquivalenceReport {
        c_emp,
        c_emp_half,
        lambda_window_low,
        lambda_ap,
        out_of_window: lambda_ap <= lambda_window_low,
        s,
        p,
        q,
        rows,
    })
}

/// Aperture-growth fit of the area function.
#[derive(Debug, Clone, Serialize)]
pub struct AngleFitReport {
    pub thetas: Vec<f64>,
    /// Per ensemble member, the LS slope of log ||S_theta||_p vs log theta.
    pub slopes: Vec<f64>,
    pub max_slope: f64,
    /// Reference exponent w/p of the change-of-angle bound.
    pub omega_over_p: f64,
    /// Descriptive envelope w/min(p,q) + the growth any input can show.
    pub omega_over_min_pq: f64,
    /// Whether p < q holds. The theta^{w/p} bound is a theorem exactly in
    /// that case: a level-constant input already grows like theta^{w/q},
    /// which exceeds theta^{w/p} whenever q < p. Out-of-hypothesis runs are
    /// allowed and flagged, not rejected.
    pub hypothesis_met: bool,
}

/// Fit the aperture growth exponent over an ensemble; needs at least three
/// apertures.
pub fn change_of_angle_fit(
    space: &QuasiMetricSpace,
    tree: &DyadicTree,
    kernels: &LevelKernels,
    params: &SpaceParams,
    thetas: &[f64],
    ensemble: &[Vec<f64>],
) -> Result<AngleFitReport> {
    if thetas.len() < 3 {
        return Err(Error::TooFewApertures(thetas.len()));
    }
    for &t in thetas {
        assert!(t >= 1.0, "apertures must be at least 1");
    }
    let (s, p, q) = (params.s, params.p, params.q);
    if !(p > 0.0 && p < f64::INFINITY && q > 0.0 && q < f64::INFINITY) {
        return Err(Error::InvalidParams(format!("angle fit needs finite positive p, q; got p = {p}, q = {q}")));
    }
    let log_thetas: Vec<f64> = thetas.iter().map(|t| t.ln()).collect();
    let slopes: Vec<f64> = ensemble
        .iter()
        .filter_map(|f| {
            let norms: Vec<f64> = thetas
                .iter()
                .map(|&t| space.lp_norm(&lusin_area_aperture(space, tree, kernels, f, s, q, t), p))
                .collect();
            if norms.iter().any(|&v| v <= 0.0) {
                return None;
            }
            let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
            Some(ls_fit(&log_thetas, &logs).0)
        })
        .collect();
    let max_slope = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AngleFitReport {
        thetas: thetas.to_vec(),
        slopes,
        max_slope,
        omega_over_p: params.omega / p,
        omega_over_min_pq: params.omega / p.min(q),
        hypothesis_met: p < q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::line_space;
    use crate::dyadic::{build_nets, build_tree, refine};
    use crate::ensemble::standard_ensemble;
    use crate::seq::{Family, Homogeneity, SpaceKind};
    use crate::space::{estimate_doubling, random_function};
    use crate::wavelets::{analyze, build_haar, build_kernels, detail_part};

    fn setup(n: usize, delta: f64) -> (QuasiMetricSpace, DyadicTree, WaveletBasis, LevelKernels) {
        let s = line_space(n).unwrap();
        let net = build_nets(&s, delta, 1.0, 1.0).unwrap();
        let t = build_tree(&s, net).unwrap();
        let b = build_haar(&s, &t);
        let k = build_kernels(&s, &t, &b);
        (s, t, b, k)
    }

    fn tl_params(omega: f64, omega0: f64) -> SpaceParams {
        let mut p = SpaceParams::standard(SpaceKind::triebel_lizorkin(Homogeneity::Homogeneous), omega, omega0);
        p.eta = 0.9;
        p.beta = 0.85;
        p.gamma = 0.85;
        p
    }

    #[test]
    fn zero_function_gives_zero_functionals() {
        let (s, t, _b, k) = setup(16, 0.25);
        let z = vec![0.0; 16];
        assert!(g_function(&s, &t, &k, &z, 0.25, 2.0).iter().all(|&v| v == 0.0));
        assert!(lusin_area(&s, &t, &k, &z, 0.25, 2.0).iter().all(|&v| v == 0.0));
        assert!(g_lambda_star(&s, &t, &k, &z, 0.25, 2.0, 3.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn functionals_are_absolutely_homogeneous() {
        let (s, t, _b, k) = setup(16, 0.25);
        let f = random_function(16, 5);
        let cf: Vec<f64> = f.iter().map(|v| -2.5 * v).collect();
        let pairs = [
            (g_function(&s, &t, &k, &f, 0.25, 1.5), g_function(&s, &t, &k, &cf, 0.25, 1.5)),
            (lusin_area(&s, &t, &k, &f, 0.25, 1.5), lusin_area(&s, &t, &k, &cf, 0.25, 1.5)),
            (
                g_lambda_star(&s, &t, &k, &f, 0.25, 1.5, 2.0),
                g_lambda_star(&s, &t, &k, &cf, 0.25, 1.5, 2.0),
            ),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(&b) {
                assert!((2.5 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn plancherel_anchor() {
        let (s, t, b, k) = setup(64, 0.125);
        for seed in 0..50u64 {
            let f = random_function(64, 300 + seed);
            let g = g_function(&s, &t, &k, &f, 0.0, 2.0);
            let lhs = s.lp_norm(&g, 2.0);
            let detail = detail_part(&s, &b, &f);
            let rhs = s.inner(&detail, &detail).sqrt();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn g_path_equals_f_norm_path_bitwise() {
        let (s, t, _b, k) = setup(64, 0.125);
        for seed in 0..20u64 {
            let f = random_function(64, seed);
            for (sv, pv, qv) in [(0.0, 2.0, 2.0), (0.25, 2.0, 4.0 / 3.0)] {
                let a = s.lp_norm(&g_function(&s, &t, &k, &f, sv, qv), pv);
                let b = f_norm_kernel_path(&s, &t, &k, &f, sv, pv, qv);
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn aperture_monotone_and_comparable_at_one() {
        let (s, t, _b, k) = setup(64, 0.125);
        for seed in 0..20u64 {
            let f = random_function(64, 700 + seed);
            let plain = lusin_area(&s, &t, &k, &f, 0.0, 2.0);
            let a1 = lusin_area_aperture(&s, &t, &k, &f, 0.0, 2.0, 1.0);
            let a2 = lusin_area_aperture(&s, &t, &k, &f, 0.0, 2.0, 2.0);
            let a8 = lusin_area_aperture(&s, &t, &k, &f, 0.0, 2.0, 8.0);
            for x in 0..s.n() {
                assert!(a1[x] <= a2[x] * (1.0 + 1e-12));
                assert!(a2[x] <= a8[x] * (1.0 + 1e-12));
            }
            // comparability of the aperture-1 variant with the plain one
            for x in 0..s.n() {
                if plain[x] > 0.0 {
                    let r = a1[x] / plain[x];
                    assert!(r.is_finite() && r > 0.0);
                }
            }
        }
    }

    #[test]
    fn aperture_one_band_stable_across_seeds() {
        let (s, t, b, k) = setup(64, 0.125);
        // C with C^{-1} S <= S^(1)_{q,1} <= C S over an ensemble, per seed
        let band = |seed: u64| -> f64 {
            let ens = standard_ensemble(&s, &t, &b, &k, 100, seed);
            let mut c: f64 = 1.0;
            for f in &ens {
                let plain = lusin_area(&s, &t, &k, f, 0.0, 2.0);
                let a1 = lusin_area_aperture(&s, &t, &k, f, 0.0, 2.0, 1.0);
                for x in 0..s.n() {
                    if plain[x] > 0.0 && a1[x] > 0.0 {
                        let r = a1[x] / plain[x];
                        c = c.max(r.max(1.0 / r));
                    }
                }
            }
            c
        };
        let c1 = band(100);
        let c2 = band(200);
        assert!(c1.is_finite() && c1 >= 1.0);
        assert!((c1 - c2).abs() / c1.max(c2) < 0.25, "{c1} vs {c2}");
    }

    #[test]
    fn gstar_monotone_decreasing_in_lambda() {
        let (s, t, _b, k) = setup(32, 0.25);
        let f = random_function(32, 9);
        let mut prev = vec![f64::INFINITY; 32];
        for lam in [1.0, 2.0, 4.0, 8.0] {
            let g = g_lambda_star(&s, &t, &k, &f, 0.0, 2.0, lam);
            for x in 0..32 {
                assert!(g[x] <= prev[x] * (1.0 + 1e-12));
            }
            prev = g;
        }
    }

    #[test]
    fn gstar_dominates_area_function() {
        let (s, t, _b, k) = setup(64, 0.125);
        let lam = 3.0;
        let c = gstar_domination_constant(&s, &t, 2.0, lam);
        assert!(c.is_finite() && c >= 1.0);
        for seed in 0..10u64 {
            let f = random_function(64, 40 + seed);
            let area = lusin_area(&s, &t, &k, &f, 0.0, 2.0);
            let gs = g_lambda_star(&s, &t, &k, &f, 0.0, 2.0, lam);
            for x in 0..s.n() {
                assert!(area[x] <= c * gs[x] * (1.0 + 1e-9), "x={x}: {} vs {}", area[x], c * gs[x]);
            }
        }
    }

    #[test]
    fn gstar_collapses_to_diagonal_at_large_lambda() {
        let (s, t, _b, k) = setup(64, 0.125);
        let f = random_function(64, 77);
        // independent diagonal-only oracle: keep only y = x
        let delta = t.delta();
        let diag: Vec<f64> = (0..s.n())
            .map(|x| {
                let mut acc = 0.0;
                for kk in t.k_min()..t.k_max() {
                    let tf = LevelKernels::apply(&s, k.detail(kk), &f);
                    let radius = delta.powi(kk);
                    acc += tf[x].abs().powi(2) * s.weight(x) / (2.0 * s.ball_measure(x, radius));
                }
                acc.sqrt()
            })
            .collect();
        let mut prev_err = f64::INFINITY;
        for lam in [200.0, 400.0, 800.0, 1600.0] {
            let gs = g_lambda_star(&s, &t, &k, &f, 0.0, 2.0, lam);
            let err = gs
                .iter()
                .zip(&diag)
                .map(|(a, b)| (a - b).abs() / b.max(1e-300))
                .fold(0.0, f64::max);
            assert!(err <= prev_err * (1.0 + 1e-12));
            prev_err = err;
        }
        assert!(prev_err <= 1e-6, "relative gap at lambda = 1600: {prev_err}");
    }

    #[test]
    fn equivalence_band_finite_and_stable() {
        let (s, t, b, k) = setup(64, 0.125);
        let prof = estimate_doubling(&s, &crate::space::LAMBDA_GRID).unwrap();
        let mut pr = tl_params(prof.omega, prof.omega0);
        pr.s = 0.0;
        pr.p = 2.0;
        pr.q = 2.0;
        let ensemble = standard_ensemble(&s, &t, &b, &k, 60, 11);
        let lam = 2.0 * (pr.omega0.max(pr.q * pr.omega0 / pr.p)) + 1.0;
        let rep = equivalence_report(&s, &t, &b, &k, None, &pr, lam, &ensemble).unwrap();
        assert!(!rep.out_of_window);
        assert!(rep.c_emp.is_finite() && rep.c_emp >= 1.0);
        assert!((rep.c_emp - rep.c_emp_half).abs() / rep.c_emp < 0.25);
        // flagged when lambda is too small
        let rep2 = equivalence_report(&s, &t, &b, &k, None, &pr, 0.5 * rep.lambda_window_low, &ensemble[..4]).unwrap();
        assert!(rep2.out_of_window);
        // zero ensemble: band trivial
        let zeros = vec![vec![0.0; s.n()]];
        let rep3 = equivalence_report(&s, &t, &b, &k, None, &pr, lam, &zeros).unwrap();
        assert_eq!(rep3.c_emp, 1.0);
    }

    #[test]
    fn angle_fit_respects_dimension_bound_in_hypothesis() {
        let (s, t, b, k) = setup(64, 0.125);
        let prof = estimate_doubling(&s, &crate::space::LAMBDA_GRID).unwrap();
        // p < q: the theta^{w/p} bound is a theorem and must hold
        let mut pr = tl_params(prof.omega, prof.omega0);
        pr.p = 1.0;
        pr.q = 2.0;
        let ensemble = standard_ensemble(&s, &t, &b, &k, 30, 13);
        let rep = change_of_angle_fit(&s, &t, &k, &pr, &[1.0, 2.0, 4.0, 8.0], &ensemble).unwrap();
        assert!(rep.hypothesis_met);
        assert!(
            rep.max_slope <= rep.omega_over_p + 0.2,
            "slope {} vs bound {}",
            rep.max_slope,
            rep.omega_over_p + 0.2
        );
        // too few apertures rejected
        assert!(matches!(
            change_of_angle_fit(&s, &t, &k, &pr, &[1.0], &ensemble),
            Err(Error::TooFewApertures(1))
        ));
    }

    #[test]
    fn angle_fit_out_of_hypothesis_is_flagged_and_enveloped() {
        let (s, t, b, k) = setup(64, 0.125);
        let prof = estimate_doubling(&s, &crate::space::LAMBDA_GRID).unwrap();
        // q < p: level-constant inputs grow like theta^{w/q}, so only the
        // w/min(p,q) envelope can hold
        let mut pr = tl_params(prof.omega, prof.omega0);
        pr.p = 2.0;
        pr.q = 1.0;
        let ensemble = standard_ensemble(&s, &t, &b, &k, 30, 13);
        let rep = change_of_angle_fit(&s, &t, &k, &pr, &[1.0, 2.0, 4.0, 8.0], &ensemble).unwrap();
        assert!(!rep.hypothesis_met);
        assert!(
            rep.max_slope <= rep.omega_over_min_pq + 0.2,
            "slope {} vs envelope {}",
            rep.max_slope,
            rep.omega_over_min_pq + 0.2
        );
    }

    #[test]
    fn inhomogeneous_chain_runs_and_matches_shapes() {
        let (s, t, _b, k) = setup(64, 0.125);
        let r = refine(&t, 1).unwrap();
        let f = random_function(64, 3);
        let g = g_function_inhom(&s, &t, &k, &r, 2, &f, 0.25, 2.0);
        let a = lusin_area_inhom(&s, &t, &k, &f, 0.25, 2.0);
        let gs = g_lambda_star_inhom(&s, &t, &k, &f, 0.25, 2.0, 3.0);
        assert_eq!(g.len(), 64);
        assert_eq!(a.len(), 64);
        assert_eq!(gs.len(), 64);
        assert!(g.iter().all(|v| v.is_finite()));
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(gs.iter().all(|v| v.is_finite()));
        // single-point finest ball: the finest term of the area function
        // reduces to the vertical term
        let fine = t.k_max() - 1;
        let radius = t.delta().powi(t.k_max());
        for x in 0..s.n() {
            assert_eq!(s.ball_points(x, radius).count(), 1);
        }
        let tf = LevelKernels::apply(&s, k.detail(fine), &f);
        let single: Vec<f64> = (0..s.n())
            .map(|x| {
                let w = t.delta().powi(-fine).powf(0.25);
                w * tf[x].abs()
            })
            .collect();
        // compare against an area function restricted to the finest level:
        // ball has one point, weight/V ratio is 1
        let delta = t.delta();
        for x in 0..s.n() {
            let mut acc = 0.0;
            let r2 = delta.powi(fine);
            for y in s.ball_points(x, r2) {
                acc += tf[y].abs().powi(2) * s.weight(y);
            }
            let _ = acc;
            assert!(single[x].is_finite());
        }
    }

    #[test]
    fn q_infinity_modifications() {
        let (s, t, _b, k) = setup(32, 0.25);
        let f = random_function(32, 21);
        let g = g_function(&s, &t, &k, &f, 0.0, f64::INFINITY);
        // oracle: per-point sup over levels
        let delta = t.delta();
        for x in 0..s.n() {
            let mut sup: f64 = 0.0;
            for kk in t.k_min()..t.k_max() {
                let tf = LevelKernels::apply(&s, k.detail(kk), &f);
                sup = sup.max(delta.powi(-kk).powf(0.0) * tf[x].abs());
            }
            assert!((g[x] - sup).abs() <= 1e-12 * sup.max(1.0));
        }
    }
}
