//! Points, point sets and empirical measures on the flat torus `[0,1)^d`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::integration::TestFunction;
use crate::summation;

/// Reduces a real number to its canonical representative in `[0, 1)`.
#[inline]
pub fn reduce(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` folded into `[-1/2, 1/2]`.
#[inline]
pub fn wrap_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    let d = d - d.floor();
    d.min(1.0 - d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Result<Self> {
        let mut coords = coords.into();
        if coords.is_empty() {
            return Err(Error::invalid("a torus point needs at least one coordinate"));
        }
        for c in coords.iter_mut() {
            if !c.is_finite() {
                return Err(Error::invalid(format!("non-finite coordinate {c}")));
            }
            *c = reduce(*c);
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        check_dim(self.dim(), shift.len())?;
        TorusPoint::new(
            self.coords
                .iter()
                .zip(shift)
                .map(|(a, s)| a + s)
                .collect::<Vec<_>>(),
        )
    }
}

/// Euclidean norm of the coordinatewise shortest-arc differences.
pub fn wrap_distance(a: &TorusPoint, b: &TorusPoint) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(wrap_distance_raw(a.coords(), b.coords()))
}

#[inline]
pub(crate) fn wrap_distance_sq_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = wrap_delta(*x, *y);
            d * d
        })
        .sum()
}

#[inline]
pub(crate) fn wrap_distance_raw(a: &[f64], b: &[f64]) -> f64 {
    wrap_distance_sq_raw(a, b).sqrt()
}

/// An ordered, nonempty list of points of one dimension.
///
/// Coordinates are stored row-major in a flat buffer; prefixes of a generated
/// sequence are themselves valid point sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    label: String,
}

impl PointSet {
    pub fn new(points: Vec<TorusPoint>, label: impl Into<String>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("a point set must be nonempty"))?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            check_dim(dim, p.dim())?;
            coords.extend_from_slice(p.coords());
        }
        Ok(Self {
            dim,
            coords,
            label: label.into(),
        })
    }

    /// Builds a point set from a flat row-major buffer, reducing every
    /// coordinate mod 1.
    pub fn from_flat(dim: usize, mut coords: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "flat buffer of length {} does not hold whole points of dimension {dim}",
                coords.len()
            )));
        }
        for c in coords.iter_mut() {
            if !c.is_finite() {
                return Err(Error::invalid(format!("non-finite coordinate {c}")));
            }
            *c = reduce(*c);
        }
        Ok(Self {
            dim,
            coords,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_points(&self) -> Vec<TorusPoint> {
        self.iter()
            .map(|c| TorusPoint {
                coords: c.to_vec(),
            })
            .collect()
    }

    /// The first `n` points.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            dim: self.dim,
            coords: self.coords[..n * self.dim].to_vec(),
            label: self.label.clone(),
        })
    }

    /// Coordinates of a one-dimensional set.
    pub fn coords_1d(&self) -> Result<&[f64]> {
        check_dim(1, self.dim)?;
        Ok(&self.coords)
    }

    /// Writes the `dim,<d>` header followed by one row per point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,{}", self.dim)?;
        for p in self.iter() {
            let row: Vec<String> = p.iter().map(|c| fmt_coord(*c)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, label: impl Into<String>) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty point file".into()))??;
        let dim = header
            .trim()
            .strip_prefix("dim,")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("expected header `dim,<d>`, got `{header}`")))?;
        let mut coords = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<&str> = line.split(',').collect();
            if row.len() != dim {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {dim}",
                    lineno + 2,
                    row.len()
                )));
            }
            for field in row {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?;
                coords.push(v);
            }
        }
        Self::from_flat(dim, coords, label)
    }

    /// JSON array of coordinate arrays.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let rows: Vec<&[f64]> = self.iter().collect();
        serde_json::to_writer(w, &rows)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(r: R, label: impl Into<String>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_reader(r)?;
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Parse("empty point array".into()))?;
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(dim, coords, label)
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_coord(x: f64) -> String {
    format!("{x:.16e}")
}

/// A probability measure supported on a point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    support: PointSet,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(support: PointSet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} atoms",
                weights.len(),
                support.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!("weight {w} is not a nonnegative real")));
        }
        let total = summation::sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { support, weights })
    }

    pub fn support(&self) -> &PointSet {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// True when every atom carries the same mass.
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| *w == w0)
    }
}

/// Uniform weights `1/N` on the given points.
pub fn empirical_from_points(ps: &PointSet) -> EmpiricalMeasure {
    let n = ps.len();
    EmpiricalMeasure {
        support: ps.clone(),
        weights: vec![1.0 / n as f64; n],
    }
}

/// Gradient norms and exact integral of a test function on the unit-volume
/// torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientStats {
    pub grad_inf: f64,
    pub grad_l2: f64,
    pub grad_l1: f64,
    pub true_integral: f64,
}

impl GradientStats {
    pub fn new(grad_inf: f64, grad_l2: f64, grad_l1: f64, true_integral: f64) -> Result<Self> {
        for (name, v) in [("grad_inf", grad_inf), ("grad_l2", grad_l2), ("grad_l1", grad_l1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !true_integral.is_finite() {
            return Err(Error::invalid("integral must be finite"));
        }
        Ok(Self {
            grad_inf,
            grad_l2,
            grad_l1,
            true_integral,
        })
    }

    /// `grad_l1 <= grad_l2 <= grad_inf`, up to a relative slack.
    pub fn holder_ordered(&self, rel_tol: f64) -> bool {
        let slack = rel_tol * self.grad_inf.max(1e-300);
        self.grad_l1 <= self.grad_l2 + slack && self.grad_l2 <= self.grad_inf + slack
    }
}

/// Gradient statistics of a registered test function. Closed forms are used
/// where they exist; the remaining norms use a midpoint rule with
/// `resolution` nodes per axis.
pub fn eval_function_stats(f: &TestFunction, resolution: usize) -> Result<GradientStats> {
    f.stats_with_resolution(resolution)
}
