//! Random inputs shared by suites and experiments.

use hilbert_core::domain::ConvexDomain;
use hilbert_core::group::builtin::BuiltinExample;
use hilbert_core::hyperbolic::{busemann_hyperbolic, ideal_from_projective, HyperbolicPoint};
use hilbert_core::{metric, rng, GeometryError, ProjectivePoint, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Chart point at Hilbert distance `s` from `x` in direction `u`.
pub fn along(
    domain: &ConvexDomain,
    x: &DVector<f64>,
    u: &DVector<f64>,
    s: f64,
) -> Result<DVector<f64>> {
    metric::geodesic_point_chart(domain, x, &(x + u), s)
}

/// Points at Hilbert distance uniform in `[0, radius)` from `center`, in
/// uniformly random chart directions.
pub fn chart_points<R: Rng>(
    domain: &ConvexDomain,
    center: &DVector<f64>,
    radius: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    (0..count)
        .map(|_| {
            let u = rng::unit_vector(rng, domain.dim());
            let s = rng.random_range(0.0..radius);
            along(domain, center, &u, s)
        })
        .collect()
}

/// Forward chord endpoint from `x` in direction `u`.
pub fn chord_end(
    domain: &ConvexDomain,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (_, t_b) = domain.chord_params(x, u)?;
    Ok(x + u * t_b)
}

/// Tangent vector at the origin of the hyperboloid.
pub fn origin_tangent(u: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(u.len() + 1);
    v.rows_mut(1, u.len()).copy_from(u);
    v
}

pub fn hyperbolic_point<R: Rng>(rng: &mut R, n: usize, radius: f64) -> HyperbolicPoint {
    let u = rng::unit_vector(rng, n);
    let s = rng.random_range(0.0..radius);
    HyperbolicPoint::origin(n).exp(&origin_tangent(&(u * s)))
}

/// Uniform ideal point `(1, u)`.
pub fn ideal<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let mut xi = DVector::zeros(n + 1);
    xi[0] = 1.0;
    xi.rows_mut(1, n).copy_from(&rng::unit_vector(rng, n));
    xi
}

/// Unit tangent at `y`, uniform on the tangent sphere.
pub fn tangent_direction<R: Rng>(rng: &mut R, y: &HyperbolicPoint) -> DVector<f64> {
    let n = y.dim();
    loop {
        let w = y.project_tangent(&rng::gaussian_vector(rng, n + 1));
        let q = hilbert_core::hyperbolic::minkowski(&w, &w);
        if q > 1e-12 {
            return w / q.sqrt();
        }
    }
}

/// Is the domain the round Klein ball `x₁² + ⋯ < x₀²` in the standard chart?
pub fn is_klein_ball(domain: &ConvexDomain) -> bool {
    let Some(q) = domain.ellipsoid_form() else {
        return false;
    };
    let n = domain.dim();
    let mut reference = DMatrix::identity(n + 1, n + 1);
    reference[(0, 0)] = -1.0;
    reference /= reference.norm();
    let f = domain.chart().functional();
    (q - reference).amax() < 1e-12 && f[0] > 0.0 && f.rows(1, n).amax() == 0.0
}

/// Points of the Klein ball at Busemann depth `depth` towards the cusp of
/// `example` (`B_{o,ξ}(y) = −depth`), spread laterally by starting from
/// random points within `radius` of `o`.
pub fn cusp_points<R: Rng>(
    example: &BuiltinExample,
    o: &ProjectivePoint,
    depth: f64,
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Vec<HyperbolicPoint>> {
    let cusp = example
        .cusp
        .as_ref()
        .ok_or_else(|| GeometryError::InvalidArgument("example has no cusp".into()))?;
    let xi = ideal_from_projective(cusp)?;
    let oh = HyperbolicPoint::from_projective(o)?;
    let n = oh.dim();
    (0..count)
        .map(|_| {
            let u = rng::unit_vector(rng, n);
            let s = rng.random_range(0.0..radius);
            let start = oh.exp(&lift_at(&oh, &u, s));
            let b = busemann_hyperbolic(&oh, &xi, &start);
            Ok(start.towards(&xi, depth + b))
        })
        .collect()
}

/// Tangent vector at `y` obtained by boosting the origin tangent `s·u`.
pub fn lift_at(y: &HyperbolicPoint, u: &DVector<f64>, s: f64) -> DVector<f64> {
    let boost = hilbert_core::hyperbolic::Isometry::boost_to(y);
    boost.matrix() * origin_tangent(&(u * s))
}
