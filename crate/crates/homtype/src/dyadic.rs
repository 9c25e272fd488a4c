//! Nested nets and the dyadic cube system.
//!
//! For a scale base `delta` in (0,1) a net system holds, per level `k`, a set
//! of net points `A_k` that is `c0 delta^k`-separated, `C0 delta^k`-covering,
//! and nested (`A_k` is a subset of `A_{k+1}`). The cube tree partitions the
//! space at every level into cubes `Q_alpha^k` around the net points such that
//! each finer cube sits inside exactly one coarser cube and each cube is
//! sandwiched between balls `B(z, c_nat delta^k)` and `B(z, C_nat delta^k)`
//! with `c_nat = c0/(3 A0^2)` and `C_nat = 2 A0 C0`. The sandwich is verified,
//! not assumed: when the sufficient hypothesis `12 A0^3 C0 delta <= c0` fails,
//! the measured factors are reported and downstream consumers use those.
//!
//! Levels are truncated to the realized range `[k_min, k_max]`: below `k_min`
//! there is a single cube equal to the whole space, above `k_max` all cubes
//! are singletons. New net points at level `k+1` form the index set `G_k`;
//! each carries one wavelet cube `Q_alpha^{k+1}` with center `x_Q = y_alpha^k
//! = z_alpha^{k+1}` and side length `l(Q) = delta^{k+1}`.

use crate::space::QuasiMetricSpace;
use crate::{Error, Result};
use serde::Serialize;

/// Nested nets at every realized level.
#[derive(Debug, Clone)]
pub struct NetSystem {
    delta: f64,
    k_min: i32,
    k_max: i32,
    /// Net point ids per level, ascending; index `(k - k_min) as usize`.
    levels: Vec<Vec<usize>>,
    c0: f64,
    cc0: f64,
}

impl NetSystem {
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn k_min(&self) -> i32 {
        self.k_min
    }
    pub fn k_max(&self) -> i32 {
        self.k_max
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn big_c0(&self) -> f64 {
        self.cc0
    }
    pub fn scale(&self, k: i32) -> f64 {
        self.delta.powi(k)
    }
    /// Net point ids at level k, ascending.
    pub fn level(&self, k: i32) -> &[usize] {
        &self.levels[(k - self.k_min) as usize]
    }
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Restrict the realized level range. The kept levels retain their
    /// verified separation/covering/nesting; a raised floor yields several
    /// root cubes, a lowered ceiling leaves non-singleton leaves.
    pub fn truncated(&self, k_min: Option<i32>, k_max: Option<i32>) -> NetSystem {
        let lo = k_min.unwrap_or(self.k_min).clamp(self.k_min, self.k_max);
        let hi = k_max.unwrap_or(self.k_max).clamp(lo, self.k_max);
        NetSystem {
            delta: self.delta,
            k_min: lo,
            k_max: hi,
            levels: self.levels[(lo - self.k_min) as usize..=(hi - self.k_min) as usize].to_vec(),
            c0: self.c0,
            cc0: self.cc0,
        }
    }
}

/// Greedy farthest-point nets, one level per scale, nested by construction.
///
/// `k_min` is the largest level whose net is a single point, `k_max` the
/// smallest level whose net is the whole point set. Separation and covering
/// are re-verified by enumeration after construction.
pub fn build_nets(space: &QuasiMetricSpace, delta: f64, c0: f64, cc0: f64) -> Result<NetSystem> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadDelta(delta));
    }
    assert!(c0 > 0.0 && cc0 >= c0, "need 0 < c0 <= C0");
    let n = space.n();
    // seed: max weight, smallest id on ties
    let seed = (0..n)
        .max_by(|&a, &b| {
            space
                .weight(a)
                .partial_cmp(&space.weight(b))
                .unwrap()
                .then(b.cmp(&a))
        })
        .unwrap();
    let ecc = (0..n).map(|x| space.dist(seed, x)).fold(0.0, f64::max);
    debug_assert!(ecc > 0.0);
    // largest k with ecc <= C0 delta^k
    let mut k_min = (ecc / cc0).ln().div_euclid((delta).ln()) as i32;
    while ecc > cc0 * delta.powi(k_min) {
        k_min -= 1;
    }
    while ecc <= cc0 * delta.powi(k_min + 1) {
        k_min += 1;
    }

    let mut levels: Vec<Vec<usize>> = vec![vec![seed]];
    let mut k = k_min;
    while levels.last().unwrap().len() < n {
        k += 1;
        let radius = cc0 * delta.powi(k);
        let mut net = levels.last().unwrap().clone();
        let mut dist_to_net: Vec<f64> = (0..n)
            .map(|x| net.iter().map(|&z| space.dist(x, z)).fold(f64::INFINITY, f64::min))
            .collect();
        loop {
            // farthest point from the net, smallest id on ties
            let (far, far_d) = dist_to_net
                .iter()
                .copied()
                .enumerate()
                .fold((usize::MAX, f64::NEG_INFINITY), |(bi, bd), (i, d)| {
                    if d > bd {
                        (i, d)
                    } else {
                        (bi, bd)
                    }
                });
            if far_d <= radius {
                break;
            }
            net.push(far);
            for x in 0..n {
                dist_to_net[x] = dist_to_net[x].min(space.dist(x, far));
            }
        }
        net.sort_unstable();
        levels.push(net);
        assert!(k - k_min < 10_000, "net construction did not terminate; delta too close to 1");
    }
    let k_max = k_min + (levels.len() as i32 - 1);

    let net = NetSystem { delta, k_min, k_max, levels, c0, cc0 };
    verify_net(space, &net)?;
    Ok(net)
}

/// Exact post-hoc check of separation and covering at every level.
pub fn verify_net(space: &QuasiMetricSpace, net: &NetSystem) -> Result<()> {
    for k in net.k_min..=net.k_max {
        let pts = net.level(k);
        let sep = net.c0 * net.scale(k);
        for (a, &i) in pts.iter().enumerate() {
            for &j in &pts[a + 1..] {
                let d = space.dist(i, j);
                if d < sep {
                    return Err(Error::NetPropertyViolated { property: "separation", level: k, i, j, d });
                }
            }
        }
        let cov = net.cc0 * net.scale(k);
        for x in 0..space.n() {
            let d = pts.iter().map(|&z| space.dist(x, z)).fold(f64::INFINITY, f64::min);
            if d > cov {
                return Err(Error::NetPropertyViolated { property: "covering", level: k, i: x, j: pts[0], d });
            }
        }
        // nesting is structural: each level extends the previous one
        if k > net.k_min {
            let prev = net.level(k - 1);
            for z in prev {
                if !pts.contains(z) {
                    return Err(Error::NetPropertyViolated {
                        property: "nesting",
                        level: k,
                        i: *z,
                        j: pts[0],
                        d: 0.0,
                    });
                }
            }
        }
    }
    Ok(())
}

/// One dyadic cube: its center net point and member points.
#[derive(Debug, Clone, Serialize)]
pub struct Cube {
    /// Point id of the center z_alpha^k.
    pub center: usize,
    /// Member point ids, ascending.
    pub members: Vec<usize>,
    /// Index of the containing cube one level up.
    pub parent: Option<usize>,
    /// Indices of the contained cubes one level down.
    pub children: Vec<usize>,
    pub mass: f64,
}

/// All cubes of one level plus the point-to-cube assignment.
#[derive(Debug, Clone, Serialize)]
pub struct TreeLevel {
    pub k: i32,
    pub cubes: Vec<Cube>,
    /// assignment[point] = cube index at this level.
    pub assignment: Vec<usize>,
}

/// One wavelet cube `Q = Q_alpha^{k+1}` for a new net point `alpha` in `G_k`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WaveletCube {
    /// The level k with alpha in G_k; the cube itself lives at level k+1.
    pub g_level: i32,
    /// Point id of the new net point; also the cube center x_Q = y_alpha^k.
    pub alpha: usize,
    /// Cube index within tree level k+1.
    pub cube_index: usize,
}

/// Measured ball-sandwich constants of the cube system.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    /// Target inner factor c0/(3 A0^2).
    pub c_natural: f64,
    /// Target outer factor 2 A0 C0.
    pub c_big_natural: f64,
    /// Smallest measured inner factor over all cubes.
    pub min_inner_factor: f64,
    /// Largest measured outer factor over all cubes.
    pub max_outer_factor: f64,
    /// Whether the sufficient hypothesis 12 A0^3 C0 delta <= c0 holds.
    pub hypothesis_holds: bool,
    /// Whether the sandwich holds with the target constants.
    pub pass: bool,
}

/// The dyadic cube tree over a net system.
#[derive(Debug, Clone)]
pub struct DyadicTree {
    net: NetSystem,
    levels: Vec<TreeLevel>,
    /// Per g-level k in [k_min, k_max-1]: new net point ids (G_k), ascending.
    gk: Vec<Vec<usize>>,
    /// Canonical wavelet-cube order: g-level ascending, alpha ascending.
    wavelet_cubes: Vec<WaveletCube>,
    sandwich: SandwichReport,
    stamp: u64,
}

impl DyadicTree {
    pub fn net(&self) -> &NetSystem {
        &self.net
    }
    pub fn delta(&self) -> f64 {
        self.net.delta()
    }
    pub fn k_min(&self) -> i32 {
        self.net.k_min()
    }
    pub fn k_max(&self) -> i32 {
        self.net.k_max()
    }
    pub fn level(&self, k: i32) -> &TreeLevel {
        &self.levels[(k - self.k_min()) as usize]
    }
    pub fn levels(&self) -> &[TreeLevel] {
        &self.levels
    }
    /// G_k = A_{k+1} \ A_k for k in [k_min, k_max-1].
    pub fn g_set(&self, k: i32) -> &[usize] {
        &self.gk[(k - self.k_min()) as usize]
    }
    pub fn sandwich(&self) -> &SandwichReport {
        &self.sandwich
    }
    /// Stamp binding coefficient sequences and operators to this tree.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    /// The wavelet-cube family, canonical order.
    pub fn wavelet_cubes(&self) -> &[WaveletCube] {
        &self.wavelet_cubes
    }

    pub fn n_wavelet_cubes(&self) -> usize {
        self.wavelet_cubes.len()
    }

    /// Side length l(Q) = delta^{k+1} of a wavelet cube.
    pub fn side_length(&self, wc: &WaveletCube) -> f64 {
        self.net.scale(wc.g_level + 1)
    }

    /// The underlying cube of a wavelet cube (at level g_level + 1).
    pub fn cube_of(&self, wc: &WaveletCube) -> &Cube {
        &self.level(wc.g_level + 1).cubes[wc.cube_index]
    }

    /// Number of scaling cubes at the coarsest level.
    pub fn n_scaling_cubes(&self) -> usize {
        self.levels[0].cubes.len()
    }

    /// d(y, Y^k): distance from a point to the reference set of g-level k.
    pub fn dist_to_y(&self, space: &QuasiMetricSpace, k: i32, y: usize) -> f64 {
        self.g_set(k)
            .iter()
            .map(|&z| space.dist(y, z))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Top-down cube assignment: each point joins, among the next-level net
/// points lying inside its current cube, the nearest one (smallest id on
/// ties). Partition and monotonicity hold by construction; the ball sandwich
/// is measured afterwards.
pub fn build_tree(space: &QuasiMetricSpace, net: NetSystem) -> Result<DyadicTree> {
    let n = space.n();
    let k_min = net.k_min();
    let k_max = net.k_max();
    let mut levels: Vec<TreeLevel> = Vec::new();

    for k in k_min..=k_max {
        let net_pts = net.level(k);
        let cube_of_net: Vec<usize> = (0..net_pts.len()).collect();
        let mut assignment = vec![usize::MAX; n];
        if k == k_min {
            for x in 0..n {
                assignment[x] = nearest_candidate(space, x, net_pts, &cube_of_net);
            }
        } else {
            let prev = levels.last().unwrap();
            // group next-level net points by the cube that contains them
            let mut group: Vec<Vec<usize>> = vec![Vec::new(); prev.cubes.len()];
            for (idx, &z) in net_pts.iter().enumerate() {
                group[prev.assignment[z]].push(idx);
            }
            for x in 0..n {
                let cands = &group[prev.assignment[x]];
                debug_assert!(!cands.is_empty(), "parent cube without eligible net point");
                let local: Vec<usize> = cands.iter().map(|&c| net_pts[c]).collect();
                let pick = nearest_candidate(space, x, &local, cands);
                assignment[x] = pick;
            }
        }
        let mut cubes: Vec<Cube> = net_pts
            .iter()
            .map(|&z| Cube { center: z, members: Vec::new(), parent: None, children: Vec::new(), mass: 0.0 })
            .collect();
        for x in 0..n {
            cubes[assignment[x]].members.push(x);
        }
        for c in &mut cubes {
            c.mass = c.members.iter().map(|&x| space.weight(x)).sum();
        }
        levels.push(TreeLevel { k, cubes, assignment });
    }

    // wire parent/child links via any member point
    for li in 1..levels.len() {
        let (coarse, fine) = levels.split_at_mut(li);
        let coarse = &mut coarse[li - 1];
        let fine = &mut fine[0];
        for (ci, cube) in fine.cubes.iter_mut().enumerate() {
            let p = coarse.assignment[cube.members[0]];
            cube.parent = Some(p);
            coarse.cubes[p].children.push(ci);
        }
    }

    // G_k and wavelet cubes
    let mut gk = Vec::new();
    let mut wavelet_cubes = Vec::new();
    for k in k_min..k_max {
        let prev: &[usize] = net.level(k);
        let next: &[usize] = net.level(k + 1);
        let new_pts: Vec<usize> = next.iter().copied().filter(|z| !prev.contains(z)).collect();
        let next_level = &levels[(k + 1 - k_min) as usize];
        for &alpha in &new_pts {
            let cube_index = next_level
                .cubes
                .iter()
                .position(|c| c.center == alpha)
                .expect("net point must center a cube");
            wavelet_cubes.push(WaveletCube { g_level: k, alpha, cube_index });
        }
        gk.push(new_pts);
    }

    let sandwich = measure_sandwich(space, &net, &levels);
    let stamp = structure_stamp(&levels);
    Ok(DyadicTree { net, levels, gk, wavelet_cubes, sandwich, stamp })
}

fn nearest_candidate(space: &QuasiMetricSpace, x: usize, ids: &[usize], tags: &[usize]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (pos, &z) in ids.iter().enumerate() {
        let d = space.dist(x, z);
        if d < best_d || (d == best_d && z < ids[best]) {
            best = pos;
            best_d = d;
        }
    }
    tags[best]
}

fn measure_sandwich(space: &QuasiMetricSpace, net: &NetSystem, levels: &[TreeLevel]) -> SandwichReport {
    let a0 = space.a0();
    let c_natural = net.c0() / (3.0 * a0 * a0);
    let c_big_natural = 2.0 * a0 * net.big_c0();
    let mut min_inner = f64::INFINITY;
    let mut max_outer: f64 = 0.0;
    for lvl in levels {
        let scale = net.scale(lvl.k);
        for cube in &lvl.cubes {
            let outer = cube.members.iter().map(|&x| space.dist(cube.center, x)).fold(0.0, f64::max);
            max_outer = max_outer.max(outer / scale);
            if cube.members.len() < space.n() {
                let inner = (0..space.n())
                    .filter(|x| !cube.members.contains(x))
                    .map(|x| space.dist(cube.center, x))
                    .fold(f64::INFINITY, f64::min);
                min_inner = min_inner.min(inner / scale);
            }
        }
    }
    let hypothesis_holds = 12.0 * a0.powi(3) * net.big_c0() * net.delta() <= net.c0();
    // inner ball is open: equality at the factor is still containment;
    // outer ball is open: members must sit strictly inside
    let pass = min_inner >= c_natural && max_outer < c_big_natural;
    SandwichReport { c_natural, c_big_natural, min_inner_factor: min_inner, max_outer_factor: max_outer, hypothesis_holds, pass }
}

fn structure_stamp(levels: &[TreeLevel]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x1000_0000_01b3);
    };
    for lvl in levels {
        eat(lvl.k as u64);
        for c in &lvl.cubes {
            eat(c.center as u64);
            for &m in &c.members {
                eat(m as u64);
            }
        }
    }
    h
}

/// Refinement of every cube into its level-(k+j0) descendants, clamped at the
/// finest level.
#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub j0: i32,
    /// tables[level_index][cube_index] = indices of descendant cubes at level
    /// min(k + j0, k_max), in that level's cube order.
    pub tables: Vec<Vec<Vec<usize>>>,
    /// Largest subcube count N(k, alpha) over all cubes.
    pub max_subcubes: usize,
}

pub fn refine(tree: &DyadicTree, j0: i32) -> Result<Refinement> {
    if j0 < 1 {
        return Err(Error::BadRefinementDepth(j0));
    }
    let mut tables = Vec::new();
    let mut max_n = 0usize;
    for lvl in tree.levels() {
        let target = (lvl.k + j0).min(tree.k_max());
        let depth = (target - lvl.k) as usize;
        let mut per_cube = Vec::with_capacity(lvl.cubes.len());
        for (ci, _) in lvl.cubes.iter().enumerate() {
            let mut frontier = vec![ci];
            let mut at = lvl.k;
            for _ in 0..depth {
                let next: Vec<usize> = frontier
                    .iter()
                    .flat_map(|&c| tree.level(at).cubes[c].children.iter().copied())
                    .collect();
                frontier = next;
                at += 1;
            }
            max_n = max_n.max(frontier.len());
            per_cube.push(frontier);
        }
        tables.push(per_cube);
    }
    Ok(Refinement { j0, tables, max_subcubes: max_n })
}

/// Serializable view of a tree for the JSON export.
#[derive(Debug, Serialize)]
pub struct TreeExport<'a> {
    pub delta: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub c0: f64,
    pub big_c0: f64,
    pub levels: &'a [TreeLevel],
    pub g_sets: &'a [Vec<usize>],
    pub wavelet_cubes: &'a [WaveletCube],
    pub sandwich: &'a SandwichReport,
}

impl DyadicTree {
    pub fn export(&self) -> TreeExport<'_> {
        TreeExport {
            delta: self.delta(),
            k_min: self.k_min(),
            k_max: self.k_max(),
            c0: self.net.c0(),
            big_c0: self.net.big_c0(),
            levels: &self.levels,
            g_sets: &self.gk,
            wavelet_cubes: &self.wavelet_cubes,
            sandwich: &self.sandwich,
        }
    }
}
