//! Small numeric helpers shared across modules.

/// Kahan–Babuška compensated accumulator. Norm accumulations run through this
/// so that results stay order-independent to ~1e-15 relative even across
/// thousands of terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.c
    }
}

/// Sum of an iterator under compensation.
pub fn ksum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::new();
    for x in it {
        acc.add(x);
    }
    acc.total()
}

/// Weighted ell^p norm with the max factored out to keep large exponents
/// (p up to 1e6 and beyond) inside f64 range. `p = inf` is the max.
pub fn weighted_lp(values: impl Iterator<Item = (f64, f64)> + Clone, p: f64) -> f64 {
    if p == f64::INFINITY {
        return values.map(|(v, _)| v.abs()).fold(0.0, f64::max);
    }
    let m = values.clone().map(|(v, _)| v.abs()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    let mut acc = Kahan::new();
    for (v, w) in values {
        acc.add((v.abs() / m).powf(p) * w);
    }
    m * acc.total().powf(1.0 / p)
}

/// Ordinary least-squares slope and intercept of y against x.
/// Returns (slope, intercept); slope is 0 when x has no spread.
pub fn ls_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mx = ksum(xs.iter().copied()) / n;
    let my = ksum(ys.iter().copied()) / n;
    let sxx = ksum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return (0.0, my);
    }
    let sxy = ksum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Deterministic sub-seed derivation so parallel trials and distinct
/// generators never share a stream. FNV-1a over the tag plus index.
pub fn subseed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    for b in index.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// x_+ = max(x, 0).
#[inline]
pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}
