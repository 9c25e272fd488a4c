//! Computational harmonic analysis on finite spaces of homogeneous type.
//!
//! A space of homogeneous type is a quasi-metric space carrying a doubling
//! measure. On a finite point set this crate realizes the full toolchain that
//! Besov/Triebel–Lizorkin theory builds on top of such spaces:
//!
//! * [`space`] — finite quasi-metric measure spaces, ball volumes, the
//!   normalized decay kernel `P_eps`, doubling-exponent estimation, and the
//!   Hardy–Littlewood maximal operator;
//! * [`dyadic`] — nested nets and the Hytönen–Kairema dyadic cube system,
//!   wavelet-cube indexing, and `j0`-refinement tables;
//! * [`wavelets`] — orthonormal multiresolution on the cube tree (exact Haar
//!   backend and a smoothed bump backend), detail/projection kernels, and
//!   exponential-decay certification of those kernels;
//! * [`seq`] — Besov and Triebel–Lizorkin sequence norms (homogeneous and
//!   inhomogeneous), parameter-window validation, and summation-bound checks;
//! * [`ado`] — almost diagonal operators on the sequence spaces: the two-scale
//!   decay bound, the constant `K`, and empirical boundedness certification;
//! * [`molecules`] — molecule validation, canonical molecule fixtures,
//!   molecule–wavelet Gram operators, and molecular synthesis;
//! * [`lp`] — Littlewood–Paley g-function, Lusin area function (with aperture),
//!   the `g_lambda^*` functional, equivalence reports, and the change-of-angle
//!   fit;
//! * [`ensemble`] — seeded random function/sequence generators used by the
//!   certification harnesses;
//! * [`io`] — point-cloud/distance-matrix ingestion and CSV/JSON export.
//!
//! Everything is exact finite arithmetic: balls are open, measures are atomic,
//! and scale sums run over the realized level range of the tree. Randomized
//! certifications are deterministic given a seed.

pub mod ado;
pub mod builtin;
pub mod dyadic;
pub mod ensemble;
pub mod io;
pub mod lp;
pub mod molecules;
pub mod seq;
pub mod space;
pub mod util;
pub mod wavelets;

pub use ado::CubeOperator;
pub use dyadic::{DyadicTree, NetSystem};
pub use seq::{CoefficientSequence, Family, Homogeneity, SpaceKind, SpaceParams};
pub use space::{DoublingProfile, MetricSpec, QuasiMetricSpace};
pub use wavelets::{Backend, LevelKernels, WaveletBasis};

use thiserror::Error;

/// Errors raised by construction and validation entry points.
///
/// Certification routines do not error on a failed bound; they return reports
/// that carry the measured constants instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("space needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("distance matrix is not symmetric at ({i},{j}): {a} vs {b}")]
    AsymmetricDistance { i: usize, j: usize, a: f64, b: f64 },
    #[error("zero distance between distinct points {i} and {j}")]
    ZeroOffDiagonal { i: usize, j: usize },
    #[error("nonzero self-distance at point {i}: {d}")]
    NonzeroDiagonal { i: usize, d: f64 },
    #[error("negative distance at ({i},{j}): {d}")]
    NegativeDistance { i: usize, j: usize, d: f64 },
    #[error("nonpositive weight at point {i}: {w}")]
    NonpositiveWeight { i: usize, w: f64 },
    #[error("quasi-triangle constant {computed} exceeds the hint {hint}")]
    A0ExceedsHint { computed: f64, hint: f64 },
    #[error("metric spec requires coordinates but none were given")]
    MissingCoordinates,
    #[error("snowflake exponent must lie in (0,1], got {0}")]
    BadSnowflakeExponent(f64),
    #[error("scale base delta must lie in (0,1), got {0}")]
    BadDelta(f64),
    #[error("net property {property} fails at level {level}: points {i} and {j} (distance {d})")]
    NetPropertyViolated { property: &'static str, level: i32, i: usize, j: usize, d: f64 },
    #[error("refinement depth j0 must be >= 1, got {0}")]
    BadRefinementDepth(i32),
    #[error("level-space Gram matrix is numerically singular (condition {cond:.3e}); increase nu or use the haar backend")]
    SingularGram { cond: f64 },
    #[error("coefficient sequence is bound to a different tree")]
    TreeMismatch,
    #[error("parameters invalid: {0}")]
    InvalidParams(String),
    #[error("molecule exponents must be positive: beta={beta}, gamma={gamma}")]
    BadMoleculeExponents { beta: f64, gamma: f64 },
    #[error("need at least 3 aperture values, got {0}")]
    TooFewApertures(usize),
    #[error("{0}")]
    Io(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
