//! Ingestion and export formats.
//!
//! Point clouds arrive as CSV with header `id,x1,...,xd,weight` (the weight
//! column optional), distance matrices as a first line with `n` followed by
//! `n` whitespace-separated rows. Parsing is locale-independent with a dot
//! decimal separator. Reports are serialized as JSON with every float
//! printed at 17 significant digits; coefficient, operator, and per-point
//! exports are plain CSV.

use crate::space::{build_space, MetricSpec, QuasiMetricSpace};
use crate::{Error, Result};
use serde::Serialize;

/// Parsed point-cloud file.
pub struct PointCloud {
    pub ids: Vec<String>,
    pub coords: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

/// Parse `id,x1,...,xd,weight` CSV text; the weight column is recognized by
/// the header.
pub fn parse_points_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.first() != Some(&"id") {
        return Err(Error::Parse { line: 1, msg: format!("header must start with 'id', got '{header}'") });
    }
    let has_weight = cols.last() == Some(&"weight");
    let dim = cols.len() - 1 - usize::from(has_weight);
    if dim == 0 {
        return Err(Error::Parse { line: 1, msg: "no coordinate columns".into() });
    }
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(|c| c.trim()).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        ids.push(fields[0].to_string());
        let mut point = Vec::with_capacity(dim);
        for f in &fields[1..=dim] {
            point.push(parse_float(f, line_no)?);
        }
        coords.push(point);
        if has_weight {
            let w = parse_float(fields[dim + 1], line_no)?;
            if !(w > 0.0) {
                return Err(Error::Parse { line: line_no, msg: format!("nonpositive weight {w}") });
            }
            weights.push(w);
        }
    }
    Ok(PointCloud { ids, coords, weights: if has_weight { Some(weights) } else { None } })
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("not a number: '{s}'") })
}

/// Parse a distance-matrix file; asymmetries up to 1e-8 (relative to the
/// larger entry) are averaged away, anything larger is an error.
pub fn parse_distance_matrix(text: &str) -> Result<(usize, Vec<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line: 1, msg: format!("first line must be the point count, got '{first}'") })?;
    let mut m = vec![0.0; n * n];
    let mut rows = 0usize;
    for (i, raw) in lines {
        let line_no = i + 1;
        if rows == n {
            return Err(Error::Parse { line: line_no, msg: "more rows than declared".into() });
        }
        let vals: Vec<&str> = raw.split_whitespace().collect();
        if vals.len() != n {
            return Err(Error::Parse { line: line_no, msg: format!("expected {n} entries, got {}", vals.len()) });
        }
        for (j, v) in vals.iter().enumerate() {
            m[rows * n + j] = parse_float(v, line_no)?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse { line: 0, msg: format!("expected {n} rows, got {rows}") });
    }
    // symmetrize below tolerance, reject above
    for i in 0..n {
        for j in (i + 1)..n {
            let a = m[i * n + j];
            let b = m[j * n + i];
            if a != b {
                let scale = a.abs().max(b.abs());
                if (a - b).abs() <= 1e-8 * scale.max(1.0) {
                    let avg = 0.5 * (a + b);
                    m[i * n + j] = avg;
                    m[j * n + i] = avg;
                } else {
                    return Err(Error::AsymmetricDistance { i, j, a, b });
                }
            }
        }
    }
    Ok((n, m))
}

/// Build a space from points-CSV text.
pub fn ingest_points_csv(text: &str, metric: &MetricSpec, a0_hint: Option<f64>) -> Result<QuasiMetricSpace> {
    let cloud = parse_points_csv(text)?;
    build_space(cloud.ids, Some(cloud.coords), metric, cloud.weights, a0_hint)
}

/// Build a space from distance-matrix text.
pub fn ingest_distance_matrix(text: &str, a0_hint: Option<f64>) -> Result<QuasiMetricSpace> {
    let (n, m) = parse_distance_matrix(text)?;
    let ids = (0..n).map(|i| i.to_string()).collect();
    build_space(ids, None, &MetricSpec::Explicit(m), None, a0_hint)
}

struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.7e}")
    }
}

/// Serialize to JSON with floats at 17 significant digits.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(out).map_err(|e| Error::Io(e.to_string()))
}

/// Per-point values as `point_id,value` CSV.
pub fn values_csv(space: &QuasiMetricSpace, values: &[f64]) -> String {
    let mut s = String::from("point_id,value\n");
    for (id, v) in space.ids().iter().zip(values) {
        s.push_str(&format!("{id},{v:.16e}\n"));
    }
    s
}

/// Coefficient sequence as `level,alpha,value` CSV (scaling rows carry the
/// coarsest level and the cube center).
pub fn coefficients_csv(tree: &crate::dyadic::DyadicTree, seq: &crate::seq::CoefficientSequence) -> String {
    let mut s = String::from("level,alpha,value\n");
    for (cube, v) in tree.level(tree.k_min()).cubes.iter().zip(&seq.scaling) {
        s.push_str(&format!("{},{},{v:.16e}\n", tree.k_min(), cube.center));
    }
    for (wc, v) in tree.wavelet_cubes().iter().zip(&seq.wavelet) {
        s.push_str(&format!("{},{},{v:.16e}\n", wc.g_level, wc.alpha));
    }
    s
}

/// Operator entries as `qlevel,qalpha,plevel,palpha,value` CSV.
pub fn operator_csv(tree: &crate::dyadic::DyadicTree, op: &crate::ado::CubeOperator) -> String {
    let mut s = String::from("qlevel,qalpha,plevel,palpha,value\n");
    let tag = |idx: usize| -> (i32, usize) {
        match op.domain {
            crate::ado::OperatorDomain::Homogeneous => {
                let wc = tree.wavelet_cubes()[idx];
                (wc.g_level, wc.alpha)
            }
            crate::ado::OperatorDomain::Inhomogeneous => {
                let ns = tree.n_scaling_cubes();
                if idx < ns {
                    (tree.k_min(), tree.level(tree.k_min()).cubes[idx].center)
                } else {
                    let wc = tree.wavelet_cubes()[idx - ns];
                    (wc.g_level, wc.alpha)
                }
            }
        }
    };
    for &(r, c, v) in &op.entries {
        let (ql, qa) = tag(r as usize);
        let (pl, pa) = tag(c as usize);
        s.push_str(&format!("{ql},{qa},{pl},{pa},{v:.16e}\n"));
    }
    s
}

/// Basis export: one CSV block per function as `point_id,value` rows plus a
/// JSON manifest describing the entries.
#[derive(Debug, Serialize)]
pub struct BasisManifest {
    pub backend: String,
    pub n_scaling_levels: usize,
    pub n_wavelets: usize,
    pub wavelet_cubes: Vec<(i32, usize)>,
}

pub fn basis_manifest(tree: &crate::dyadic::DyadicTree, basis: &crate::wavelets::WaveletBasis) -> BasisManifest {
    BasisManifest {
        backend: match basis.backend {
            crate::wavelets::Backend::Haar => "haar".into(),
            crate::wavelets::Backend::Smoothed { nu, a } => format!("smoothed(nu={nu},a={a})"),
        },
        n_scaling_levels: basis.phi.len(),
        n_wavelets: basis.psi.len(),
        wavelet_cubes: tree.wavelet_cubes().iter().map(|wc| (wc.g_level, wc.alpha)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_csv_roundtrip() {
        let text = "id,x1,x2,weight\na,0.0,0.0,1.0\nb,1.0,0.0,2.0\nc,0.0,1.0,1.5\n";
        let s = ingest_points_csv(text, &MetricSpec::Euclidean, None).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.total_mass(), 4.5);
        assert_eq!(s.dist(0, 1), 1.0);
    }

    #[test]
    fn points_csv_without_weight() {
        let text = "id,x1\n0,0.0\n1,1.0\n";
        let s = ingest_points_csv(text, &MetricSpec::Euclidean, None).unwrap();
        assert_eq!(s.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "id,x1\n0,0.0\n1,not_a_number\n";
        match ingest_points_csv(text, &MetricSpec::Euclidean, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "id,x1,weight\n0,0.0,1.0\n1,1.0,-2.0\n";
        match ingest_points_csv(text, &MetricSpec::Euclidean, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_symmetrization_policy() {
        // tiny asymmetry: accepted after averaging
        let eps = 5e-9;
        let text = format!("2\n0 1\n{} 0\n", 1.0 + eps);
        let s = ingest_distance_matrix(&text, None).unwrap();
        assert!((s.dist(0, 1) - (1.0 + eps / 2.0)).abs() < 1e-15);
        // large asymmetry: rejected
        let text = "2\n0 1\n1.1 0\n";
        assert!(matches!(ingest_distance_matrix(text, None), Err(Error::AsymmetricDistance { .. })));
    }

    #[test]
    fn json_floats_carry_17_digits() {
        #[derive(Serialize)]
        struct T {
            v: f64,
        }
        let s = to_json_17(&T { v: 1.0 / 3.0 }).unwrap();
        assert_eq!(s, "{\"v\":3.3333333333333331e-1}");
    }
}
