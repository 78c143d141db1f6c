//! The hyperboloid model `{X : ⟨X, X⟩ = −1, X₀ > 0}` of ℍⁿ with the form
//! `⟨X, Y⟩ = −X₀Y₀ + X₁Y₁ + ⋯ + X_nY_n`. Ideal points are future null
//! vectors, normalized as `(1, u)` with `|u| = 1`, which is also their Klein
//! chart position.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{GeometryError, Result};
use crate::projective::{ProjectiveMap, ProjectivePoint};
use crate::rng;

pub fn minkowski(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    -a[0] * b[0] + a.rows(1, a.len() - 1).dot(&b.rows(1, b.len() - 1))
}

/// The form matrix `diag(−1, 1, …, 1)`.
pub fn lorentz_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(n + 1, n + 1);
    j[(0, 0)] = -1.0;
    j
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicPoint {
    coords: DVector<f64>,
}

impl HyperbolicPoint {
    pub fn origin(n: usize) -> Self {
        let mut c = DVector::zeros(n + 1);
        c[0] = 1.0;
        Self { coords: c }
    }

    /// Accepts any timelike vector and rescales it onto the upper sheet.
    pub fn from_timelike(v: DVector<f64>) -> Result<Self> {
        let q = minkowski(&v, &v);
        if !(q < 0.0) || v.len() < 2 {
            return Err(GeometryError::PointOutsideDomain);
        }
        let mut c = v / (-q).sqrt();
        if c[0] < 0.0 {
            c.neg_mut();
        }
        Ok(Self { coords: c })
    }

    pub fn from_klein(c: &DVector<f64>) -> Result<Self> {
        let r2 = c.norm_squared();
        if !(r2 < 1.0) {
            return Err(GeometryError::PointOutsideDomain);
        }
        let s = 1.0 / (1.0 - r2).sqrt();
        let mut x = DVector::zeros(c.len() + 1);
        x[0] = s;
        x.rows_mut(1, c.len()).copy_from(&(c * s));
        Ok(Self { coords: x })
    }

    /// From a projective point of the Klein ball `x₁² + ⋯ < x₀²`.
    pub fn from_projective(p: &ProjectivePoint) -> Result<Self> {
        Self::from_timelike(p.coords().clone())
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn to_klein(&self) -> DVector<f64> {
        self.coords.rows(1, self.dim()).into_owned() / self.coords[0]
    }

    pub fn to_projective(&self) -> ProjectivePoint {
        ProjectivePoint::new(self.coords.clone()).expect("timelike vectors are nonzero")
    }

    /// Orthogonal projection onto the tangent space.
    pub fn project_tangent(&self, w: &DVector<f64>) -> DVector<f64> {
        w + &self.coords * minkowski(&self.coords, w)
    }

    /// `cosh|v| · y + sinh|v| · v/|v|` for tangent `v`.
    pub fn exp(&self, v: &DVector<f64>) -> Self {
        let len = minkowski(v, v).max(0.0).sqrt();
        if len == 0.0 {
            return self.clone();
        }
        let c = &self.coords * len.cosh() + v * (len.sinh() / len);
        // Re-normalize against round-off.
        Self::from_timelike(c).expect("exponential stays on the hyperboloid")
    }

    /// Tangent vector at `self` pointing to `other`, of length the distance.
    pub fn log(&self, other: &Self) -> DVector<f64> {
        let w = self.project_tangent(&other.coords);
        let len = minkowski(&w, &w).max(0.0).sqrt();
        if len == 0.0 {
            return w;
        }
        w * (distance(self, other) / len)
    }

    /// Unit tangent towards an ideal point.
    pub fn direction_to(&self, xi: &DVector<f64>) -> DVector<f64> {
        let p = minkowski(&self.coords, xi);
        (xi + &self.coords * p) / -p
    }

    /// Point at distance `s` along the ray towards ideal point `xi`.
    pub fn towards(&self, xi: &DVector<f64>, s: f64) -> Self {
        self.exp(&(self.direction_to(xi) * s))
    }

    /// Ideal endpoint of the geodesic ray with tangent `v`.
    pub fn endpoint(&self, v: &DVector<f64>) -> DVector<f64> {
        let len = minkowski(v, v).sqrt();
        ideal_point(&(&self.coords + v / len))
    }
}

/// Normalize a future null vector to `(1, u)`, `|u| = 1`.
pub fn ideal_point(v: &DVector<f64>) -> DVector<f64> {
    let u = v.rows(1, v.len() - 1);
    let mut out = DVector::zeros(v.len());
    out[0] = 1.0;
    out.rows_mut(1, v.len() - 1).copy_from(&(u / u.norm()));
    out
}

/// Ideal point of a projective point on (or numerically near) the sphere at
/// infinity of the Klein ball.
pub fn ideal_from_projective(p: &ProjectivePoint) -> Result<DVector<f64>> {
    let c = p.coords();
    if c[0].abs() < 1e-12 {
        return Err(GeometryError::PointAtInfinity);
    }
    let u = c.rows(1, c.len() - 1) / c[0];
    let r = u.norm();
    if (r - 1.0).abs() > 1e-6 {
        return Err(GeometryError::InvalidDomain(format!(
            "point is not on the sphere at infinity (radius {r})"
        )));
    }
    Ok(ideal_point(&DVector::from_iterator(
        c.len(),
        std::iter::once(1.0).chain(u.iter().copied()),
    )))
}

/// Hyperbolic distance, computed as `2 asinh(|X − Y|/2)` with the Minkowski
/// length of the (spacelike) chord, which is accurate for nearby points.
pub fn distance(a: &HyperbolicPoint, b: &HyperbolicPoint) -> f64 {
    let d = a.coords() - b.coords();
    let q = minkowski(&d, &d).max(0.0);
    2.0 * (0.5 * q.sqrt()).asinh()
}

/// `B_{o,ξ}(y) = log(⟨y, ξ⟩ / ⟨o, ξ⟩)`.
pub fn busemann_hyperbolic(o: &HyperbolicPoint, xi: &DVector<f64>, y: &HyperbolicPoint) -> f64 {
    (minkowski(y.coords(), xi) / minkowski(o.coords(), xi)).ln()
}

/// Riemannian gradient of `y ↦ B_{o,ξ}(y)`: `−v(y, ξ)`.
pub fn busemann_gradient(y: &HyperbolicPoint, xi: &DVector<f64>) -> DVector<f64> {
    -y.direction_to(xi)
}

/// An element of O⁺(n,1) acting on the hyperboloid.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    matrix: DMatrix<f64>,
}

impl Isometry {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n1 = matrix.nrows();
        if !matrix.is_square() || n1 < 2 {
            return Err(GeometryError::DimensionMismatch {
                expected: n1,
                got: matrix.ncols(),
            });
        }
        let j = lorentz_form(n1 - 1);
        let residual = (matrix.transpose() * &j * &matrix - &j).amax();
        if residual > 1e-8 * matrix.amax().powi(2) || matrix[(0, 0)] <= 0.0 {
            return Err(GeometryError::MapDoesNotPreserveDomain(format!(
                "not a time-preserving Lorentz matrix (residual {residual:e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// The Lorentz matrix of a projective map of the Klein ball, scaled to
    /// preserve the form and time orientation.
    pub fn from_projective(g: &ProjectiveMap) -> Result<Self> {
        let m = g.matrix();
        let n = m.nrows() - 1;
        let o = HyperbolicPoint::origin(n);
        let image = m * o.coords();
        let q = minkowski(&image, &image);
        if !(q < 0.0) {
            return Err(GeometryError::MapDoesNotPreserveDomain(
                "origin leaves the ball".into(),
            ));
        }
        let mut scaled = m / (-q).sqrt();
        if image[0] < 0.0 {
            scaled.neg_mut();
        }
        Self::new(scaled)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n + 1, n + 1),
        }
    }

    /// The transvection along the geodesic from the origin to `y`.
    pub fn boost_to(y: &HyperbolicPoint) -> Self {
        let n1 = y.coords.len();
        let c = y.coords[0];
        let u = y.coords.rows(1, n1 - 1).into_owned();
        let mut m = DMatrix::identity(n1, n1);
        m[(0, 0)] = c;
        for i in 0..n1 - 1 {
            m[(0, i + 1)] = u[i];
            m[(i + 1, 0)] = u[i];
            for j in 0..n1 - 1 {
                m[(i + 1, j + 1)] += u[i] * u[j] / (1.0 + c);
            }
        }
        Self { matrix: m }
    }

    /// Rotation about the origin by an orthogonal matrix of ℝⁿ.
    pub fn rotation(q: &DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        let mut m = DMatrix::identity(n + 1, n + 1);
        m.view_mut((1, 1), (n, n)).copy_from(q);
        Self::new(m)
    }

    /// Random isometry: a rotation followed by a boost to a point at
    /// distance ≤ `radius` from the origin.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Self {
        let g = DMatrix::from_fn(n, n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let q = g.qr().q();
        let rot = Self::rotation(&q).expect("orthogonal");
        let s: f64 = if radius > 0.0 {
            rng.random_range(0.0..radius)
        } else {
            0.0
        };
        let dir = rng::unit_vector(rng, n);
        let mut v = DVector::zeros(n + 1);
        v.rows_mut(1, n).copy_from(&dir);
        let target = HyperbolicPoint::origin(n).exp(&(v * s));
        Self::boost_to(&target).compose(&rot)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> Self {
        let j = lorentz_form(self.matrix.nrows() - 1);
        Self {
            matrix: &j * self.matrix.transpose() * &j,
        }
    }

    pub fn apply(&self, y: &HyperbolicPoint) -> HyperbolicPoint {
        HyperbolicPoint::from_timelike(&self.matrix * y.coords())
            .expect("isometries keep points timelike")
    }

    pub fn apply_ideal(&self, xi: &DVector<f64>) -> DVector<f64> {
        ideal_point(&(&self.matrix * xi))
    }

    pub fn to_projective(&self) -> ProjectiveMap {
        ProjectiveMap::new(self.matrix.clone()).expect("Lorentz matrices are invertible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn klein_round_trip_and_distance() {
        let y = HyperbolicPoint::from_klein(&v(&[0.5, 0.0])).unwrap();
        assert!((minkowski(y.coords(), y.coords()) + 1.0).abs() < 1e-14);
        assert!((y.to_klein() - v(&[0.5, 0.0])).norm() < 1e-15);
        let d = distance(&HyperbolicPoint::origin(2), &y);
        assert!((d - 0.5f64.atanh()).abs() < 1e-14);
    }

    #[test]
    fn busemann_along_a_ray_is_minus_time() {
        let o = HyperbolicPoint::from_klein(&v(&[0.1, -0.3, 0.2])).unwrap();
        let xi = ideal_point(&v(&[1.0, 0.0, 0.6, 0.8]));
        for s in [0.0, 0.7, 3.0, 9.0] {
            let y = o.towards(&xi, s);
            assert!((busemann_hyperbolic(&o, &xi, &y) + s).abs() < 1e-8);
            let d = distance(&o, &y);
            assert!((d - s).abs() < 1e-8, "{s} {d}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let o = HyperbolicPoint::origin(2);
        let xi = ideal_point(&v(&[1.0, 0.6, -0.8]));
        let y = HyperbolicPoint::from_klein(&v(&[0.2, 0.4])).unwrap();
        let w = y.project_tangent(&v(&[0.0, 0.3, -0.5]));
        let h = 1e-6;
        let fd = (busemann_hyperbolic(&o, &xi, &y.exp(&(&w * h)))
            - busemann_hyperbolic(&o, &xi, &y.exp(&(&w * -h))))
            / (2.0 * h);
        let g = busemann_gradient(&y, &xi);
        assert!((fd - minkowski(&g, &w)).abs() < 1e-8);
    }

    #[test]
    fn boosts_and_random_isometries() {
        let y = HyperbolicPoint::from_klein(&v(&[0.3, 0.6])).unwrap();
        let b = Isometry::boost_to(&y);
        assert!(distance(&b.apply(&HyperbolicPoint::origin(2)), &y) < 1e-12);
        let mut rng = rng::stream(5, 0);
        let g = Isometry::random(&mut rng, 3, 2.0);
        Isometry::new(g.matrix().clone()).unwrap();
        let p = HyperbolicPoint::from_klein(&v(&[0.1, 0.2, 0.3])).unwrap();
        let q = HyperbolicPoint::from_klein(&v(&[-0.4, 0.0, 0.5])).unwrap();
        assert!((distance(&g.apply(&p), &g.apply(&q)) - distance(&p, &q)).abs() < 1e-10);
        let back = g.inverse().apply(&g.apply(&p));
        assert!(distance(&back, &p) < 1e-10);
    }

    #[test]
    fn log_inverts_exp() {
        let y = HyperbolicPoint::from_klein(&v(&[0.3, -0.2])).unwrap();
        let w = y.project_tangent(&v(&[0.1, 0.7, 0.4]));
        let z = y.exp(&w);
        assert!((y.log(&z) - w).norm() < 1e-10);
    }
}
