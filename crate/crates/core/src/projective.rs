//! Homogeneous coordinates: points, projective maps, affine charts and the
//! cross-ratio.

use crate::error::{GeometryError, Result};
use crate::tolerances::TOLERANCES;
use nalgebra::{DMatrix, DVector};

/// A point of ℝPⁿ stored as a unit vector whose first significant entry is positive.
#[derive(Debug, Clone)]
pub struct ProjectivePoint {
    coords: DVector<f64>,
}

/// Entries below this magnitude are skipped when fixing the sign.
const SIGN_THRESHOLD: f64 = 1e-9;

impl ProjectivePoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        let norm = coords.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        let mut coords = coords / norm;
        let pivot = coords
            .iter()
            .copied()
            .find(|c| c.abs() > SIGN_THRESHOLD)
            .unwrap_or(0.0);
        if pivot < 0.0 {
            coords.neg_mut();
        }
        Ok(Self { coords })
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    /// Canonical unit representative.
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Projective dimension n (the vector has n + 1 entries).
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// Equality of projective classes up to `tol` in canonical coordinates.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.coords.len() != other.coords.len() {
            return false;
        }
        let same = (&self.coords - &other.coords).amax();
        let flipped = (&self.coords + &other.coords).amax();
        same.min(flipped) <= tol
    }

    /// Quantized canonical coordinates, used as a sort/dedup key.
    pub fn key(&self, resolution: f64) -> Vec<i64> {
        self.coords
            .iter()
            .map(|c| (c / resolution).round() as i64)
            .collect()
    }
}

impl PartialEq for ProjectivePoint {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(other, TOLERANCES.point_identity)
    }
}

/// An invertible linear map of ℝⁿ⁺¹ acting on ℝPⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveMap {
    matrix: DMatrix<f64>,
}

impl ProjectiveMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GeometryError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let fro = matrix.norm();
        let det = if fro > 0.0 {
            (&matrix / fro).determinant()
        } else {
            0.0
        };
        if det.abs() <= TOLERANCES.singular_determinant || !det.is_finite() {
            return Err(GeometryError::SingularMatrix { det });
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: rows.iter().map(Vec::len).find(|&l| l != n).unwrap_or(n),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n + 1, n + 1),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn apply(&self, p: &ProjectivePoint) -> ProjectivePoint {
        ProjectivePoint::new(&self.matrix * p.coords())
            .expect("invertible map sends nonzero to nonzero")
    }

    /// Raw linear action, without renormalization.
    pub fn apply_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            matrix: self
                .matrix
                .clone()
                .try_inverse()
                .expect("constructor guarantees invertibility"),
        }
    }

    /// Frobenius distance between the two maps after normalizing each to unit
    /// norm, minimized over the sign.
    pub fn projective_residual(&self, other: &Self) -> f64 {
        let a = &self.matrix / self.matrix.norm();
        let b = &other.matrix / other.matrix.norm();
        (&a - &b).norm().min((&a + &b).norm())
    }
}

/// Apply `g` to every point.
pub fn apply_map(g: &ProjectiveMap, p: &ProjectivePoint) -> ProjectivePoint {
    g.apply(p)
}

/// An affine chart: the complement of the hyperplane `functional = 0`, with
/// coordinates taken in an orthonormal basis of the functional's kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineChart {
    functional: DVector<f64>,
    basis: DMatrix<f64>,
}

impl AffineChart {
    pub fn new(functional: DVector<f64>) -> Result<Self> {
        let norm = functional.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        let functional = functional / norm;
        let dim = functional.len();
        // Standard charts keep the remaining coordinate axes verbatim.
        if let Some(k) = (0..dim).find(|&k| (functional[k].abs() - 1.0).abs() < 1e-15) {
            let mut basis = DMatrix::zeros(dim, dim - 1);
            for (col, i) in (0..dim).filter(|&i| i != k).enumerate() {
                basis[(i, col)] = 1.0;
            }
            return Ok(Self { functional, basis });
        }
        let skip = functional.iamax();
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(dim - 1);
        for i in (0..dim).filter(|&i| i != skip) {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            let mut w = &e - &functional * functional.dot(&e);
            for c in &columns {
                w -= c * c.dot(&w);
            }
            let len = w.norm();
            columns.push(w / len);
        }
        Ok(Self {
            functional,
            basis: DMatrix::from_columns(&columns),
        })
    }

    /// The chart `x_k ≠ 0` of ℝPⁿ.
    pub fn standard(n: usize, k: usize) -> Self {
        let mut f = DVector::zeros(n + 1);
        f[k] = 1.0;
        Self::new(f).expect("unit functional")
    }

    pub fn functional(&self) -> &DVector<f64> {
        &self.functional
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn evaluate(&self, v: &DVector<f64>) -> f64 {
        self.functional.dot(v)
    }

    /// Chart coordinates of a homogeneous vector.
    pub fn coords_of_vector(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let f = self.functional.dot(v);
        if f.abs() <= 1e-14 * v.norm() {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(self.basis.tr_mul(v) / f)
    }

    pub fn to_chart(&self, p: &ProjectivePoint) -> Result<DVector<f64>> {
        self.coords_of_vector(p.coords())
    }

    /// Homogeneous representative `functional + basis · c` of chart point `c`.
    pub fn lift(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.functional + &self.basis * c
    }

    /// Homogeneous direction of a chart tangent vector.
    pub fn lift_direction(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * v
    }

    pub fn from_chart(&self, c: &DVector<f64>) -> ProjectivePoint {
        ProjectivePoint::new(self.lift(c)).expect("lift is never zero")
    }

    /// Chart in which `g(Ω)` is bounded when `self` bounds Ω.
    pub fn transported(&self, g: &ProjectiveMap) -> Self {
        let inv = g.inverse();
        Self::new(inv.matrix().tr_mul(&self.functional)).expect("nonzero functional")
    }
}

/// Differential of `g` between charts: the image of tangent vector `v` at
/// chart point `c` of `source` in the chart `target`.
pub fn chart_differential(
    g: &ProjectiveMap,
    source: &AffineChart,
    target: &AffineChart,
    c: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let y = g.apply_vector(&source.lift(c));
    let dy = g.apply_vector(&source.lift_direction(v));
    let f = target.evaluate(&y);
    if f.abs() <= 1e-14 * y.norm() {
        return Err(GeometryError::PointAtInfinity);
    }
    let df = target.evaluate(&dy);
    let by = target.basis.tr_mul(&y);
    let bdy = target.basis.tr_mul(&dy);
    Ok((bdy * f - by * df) / (f * f))
}

/// Orthonormal basis of the 2-plane spanned by four points, if they are collinear.
fn line_basis(points: [&ProjectivePoint; 4]) -> Result<(DVector<f64>, DVector<f64>)> {
    let dim = points[0].coords().len();
    if points.iter().any(|p| p.coords().len() != dim) {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: points
                .iter()
                .map(|p| p.coords().len())
                .find(|&l| l != dim)
                .unwrap_or(dim),
        });
    }
    let m = DMatrix::from_fn(4, dim, |i, j| points[i].coords()[j]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    let third = order.get(2).map_or(0.0, |&i| svd.singular_values[i]);
    let residual = third / largest;
    if residual > TOLERANCES.collinearity {
        return Err(GeometryError::NonCollinear { residual });
    }
    let e0 = v_t.row(order[0]).transpose();
    let e1 = v_t.row(order[1]).transpose();
    Ok((e0, e1))
}

/// Cross-ratio `[a:x:y:b] = |a−y||b−x| / (|a−x||b−y|)`, evaluated chart-free
/// through 2×2 determinants on the line's own 2-plane.
pub fn cross_ratio(
    a: &ProjectivePoint,
    x: &ProjectivePoint,
    y: &ProjectivePoint,
    b: &ProjectivePoint,
) -> Result<f64> {
    let (e0, e1) = line_basis([a, x, y, b])?;
    let plane = |p: &ProjectivePoint| (p.coords().dot(&e0), p.coords().dot(&e1));
    let det = |p: (f64, f64), q: (f64, f64)| p.0 * q.1 - p.1 * q.0;
    let (pa, px, py, pb) = (plane(a), plane(x), plane(y), plane(b));
    let ax = det(pa, px);
    let by = det(pb, py);
    if ax.abs() < 1e-14 || by.abs() < 1e-14 {
        return Err(GeometryError::DegenerateConfiguration);
    }
    Ok(((det(pa, py) * det(pb, px)) / (ax * by)).abs())
}
