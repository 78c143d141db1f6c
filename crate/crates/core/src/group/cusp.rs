//! Displacement, numerical isometry classification and cusp tooling.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::metric::{self, BoundaryPoint, Horoball, Provenance};
use crate::projective::{ProjectiveMap, ProjectivePoint};
use crate::rng;

fn image_chart(domain: &ConvexDomain, g: &ProjectiveMap, x: &DVector<f64>) -> Result<DVector<f64>> {
    let gx = domain
        .chart()
        .coords_of_vector(&g.apply_vector(&domain.chart().lift(x)))
        .map_err(|_| GeometryError::MapDoesNotPreserveDomain("image leaves the chart".into()))?;
    if !domain.contains_chart(&gx) {
        return Err(GeometryError::MapDoesNotPreserveDomain(
            "image of an interior point is not interior".into(),
        ));
    }
    Ok(gx)
}

fn displacement_chart(domain: &ConvexDomain, g: &ProjectiveMap, x: &DVector<f64>) -> Result<f64> {
    let gx = image_chart(domain, g, x)?;
    metric::distance_chart(domain, x, &gx)
}

/// `d_Ω(x, g·x)`.
pub fn displacement(domain: &ConvexDomain, g: &ProjectiveMap, x: &ProjectivePoint) -> Result<f64> {
    let xc = domain
        .to_chart(x)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    if !domain.contains_chart(&xc) {
        return Err(GeometryError::PointOutsideDomain);
    }
    displacement_chart(domain, g, &xc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IsometryKind {
    Hyperbolic,
    Parabolic,
    EllipticOrIdentity,
}

/// Result of the numerical classification. The method is heuristic: it
/// samples displacements and never certifies.
#[derive(Debug, Clone, Serialize)]
pub struct IsometryClass {
    pub kind: IsometryKind,
    /// Estimated infimum of the displacement.
    pub displacement_infimum: f64,
    /// Displacements along the sequence that supported the decision.
    pub evidence: Vec<f64>,
    pub heuristic: bool,
}

/// Compass search for the minimal displacement, started from `x`.
fn local_minimum(
    domain: &ConvexDomain,
    g: &ProjectiveMap,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = domain.dim();
    let mut best = x.clone();
    let mut value = displacement_chart(domain, g, &best)?;
    let mut step = 0.1 * {
        let (t_a, t_b) = domain.chord_params(
            x,
            &DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }),
        )?;
        (t_b - t_a).min(1.0)
    };
    let mut iterations = 0;
    while step > 1e-10 && iterations < 4000 {
        iterations += 1;
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut y = best.clone();
                y[i] += sign * step;
                if !domain.contains_chart(&y) {
                    continue;
                }
                if let Ok(d) = displacement_chart(domain, g, &y) {
                    if d < value {
                        value = d;
                        best = y;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best, value))
}

/// Real eigen-directions of `g` whose projective class is on ∂Ω.
fn boundary_fixed_points(domain: &ConvexDomain, g: &ProjectiveMap) -> Vec<DVector<f64>> {
    let m = g.matrix();
    let n1 = m.nrows();
    let scale = m.determinant().abs().powf(1.0 / n1 as f64);
    let m = m / scale;
    let o = domain.basepoint_chart();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for lambda in m.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-4 * lambda.norm() {
            continue;
        }
        let shifted = &m - DMatrix::identity(n1, n1) * lambda.re;
        let svd = shifted.svd(false, true);
        let Some(v_t) = svd.v_t else { continue };
        let k = svd.singular_values.imin();
        let v = v_t.row(k).transpose();
        let Ok(c) = domain.chart().coords_of_vector(&v) else {
            continue;
        };
        if (&c - &o).norm() == 0.0 {
            continue;
        }
        // Snap to the boundary along the ray from the basepoint.
        let dir = &c - &o;
        let Ok((_, t_b)) = domain.chord_params(&o, &dir) else {
            continue;
        };
        if (t_b - 1.0).abs() > 1e-3 {
            continue;
        }
        let xi = &o + dir * t_b;
        let image = domain
            .chart()
            .coords_of_vector(&g.apply_vector(&domain.chart().lift(&xi)));
        if image.is_ok_and(|im| (im - &xi).norm() < 1e-4)
            && !out.iter().any(|p| (p - &xi).norm() < 1e-6)
        {
            out.push(xi);
        }
    }
    out
}

/// Classify `g` by the behaviour of its displacement function.
pub fn classify(domain: &ConvexDomain, g: &ProjectiveMap) -> Result<IsometryClass> {
    let o = domain.basepoint_chart();
    let n = domain.dim();
    // Coarse grid: rays from the basepoint in a fixed fan of directions.
    let mut rng = rng::stream(0xc1a5, 0);
    let mut grid = vec![o.clone()];
    for _ in 0..24 {
        let u = rng::unit_vector(&mut rng, n);
        let (_, t_b) = domain.chord_params(&o, &u)?;
        let xi = &o + &u * t_b;
        for s in [0.5, 1.0, 2.0, 3.0] {
            grid.push(metric::geodesic_point_chart(domain, &o, &xi, s)?);
        }
    }
    let mut start = o.clone();
    let mut coarse = f64::INFINITY;
    for x in &grid {
        let d = displacement_chart(domain, g, x)?;
        if d < coarse {
            coarse = d;
            start = x.clone();
        }
    }
    let (_, local) = local_minimum(domain, g, &start)?;
    if local < 1e-7 {
        return Ok(IsometryClass {
            kind: IsometryKind::EllipticOrIdentity,
            displacement_infimum: local,
            evidence: vec![coarse, local],
            heuristic: true,
        });
    }
    let fixed = boundary_fixed_points(domain, g);
    for xi in &fixed {
        let seq = (1..=12)
            .map(|k| {
                let x = metric::geodesic_point_chart(domain, &o, xi, k as f64)?;
                displacement_chart(domain, g, &x)
            })
            .collect::<Result<Vec<_>>>()?;
        let decreasing = seq.windows(2).all(|w| w[1] < w[0]);
        let last = *seq.last().expect("nonempty");
        if decreasing && last < 1e-3 {
            return Ok(IsometryClass {
                kind: IsometryKind::Parabolic,
                displacement_infimum: last,
                evidence: seq,
                heuristic: true,
            });
        }
    }
    if fixed.len() >= 2 && local > 1e-3 {
        // Minimize along the axis joining the two fixed points.
        let (p, q) = (&fixed[0], &fixed[1]);
        let mid = (p + q) * 0.5;
        let (_, on_axis) = if domain.contains_chart(&mid) {
            local_minimum(domain, g, &mid)?
        } else {
            (mid, local)
        };
        let value = on_axis.min(local);
        return Ok(IsometryClass {
            kind: IsometryKind::Hyperbolic,
            displacement_infimum: value,
            evidence: vec![coarse, local, on_axis],
            heuristic: true,
        });
    }
    Err(GeometryError::Inconclusive(format!(
        "minimal sampled displacement {local:e} with {} boundary fixed points",
        fixed.len()
    )))
}

/// Output of [`short_loop_horoball`].
#[derive(Debug, Clone)]
pub struct ShortLoopHoroball {
    pub horoball: Horoball,
    /// Bisection steps used.
    pub steps: usize,
    /// Samples checked on each tested horosphere.
    pub samples_per_level: usize,
    /// Largest sampled displacement inside the certified horoball.
    pub max_displacement: f64,
}

const LEVEL_SAMPLES: usize = 1000;
const MAX_BISECTION_STEPS: usize = 60;
/// Below this level chart points sit within ~1e-10 of the boundary and
/// displacements lose their precision.
const DEEPEST_LEVEL: f64 = -12.0;

/// Move `x` along the line through the center until its Busemann value is `level`.
fn project_to_horosphere(
    domain: &ConvexDomain,
    o: &DVector<f64>,
    xi: &DVector<f64>,
    x: &DVector<f64>,
    level: f64,
) -> Result<DVector<f64>> {
    let b = metric::busemann_chart(domain, o, xi, x)?.value;
    if b > level {
        metric::geodesic_point_chart(domain, x, xi, b - level)
    } else if b < level {
        let dir = xi - x;
        let (t_a, _) = domain.chord_params(x, &dir)?;
        let far = x + dir * t_a;
        metric::geodesic_point_chart(domain, x, &far, level - b)
    } else {
        Ok(x.clone())
    }
}

/// Points of the horosphere at `level` covering a fundamental domain of the
/// parabolic group: chart combinations of a point and its images, pushed
/// back onto the horosphere.
fn horosphere_samples(
    domain: &ConvexDomain,
    parabolics: &[ProjectiveMap],
    o: &DVector<f64>,
    xi: &DVector<f64>,
    level: f64,
) -> Result<Vec<DVector<f64>>> {
    let z0 = if level <= 0.0 {
        metric::geodesic_point_chart(domain, o, xi, -level)?
    } else {
        project_to_horosphere(domain, o, xi, o, level)?
    };
    let images = parabolics
        .iter()
        .map(|p| image_chart(domain, p, &z0))
        .collect::<Result<Vec<_>>>()?;
    let k = images.len();
    let per_axis = (LEVEL_SAMPLES as f64).powf(1.0 / k as f64).ceil() as usize;
    let total = per_axis.pow(k as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rest = idx;
        let mut c = z0.clone();
        for img in &images {
            let a = (rest % per_axis) as f64 / per_axis as f64;
            rest /= per_axis;
            c += (img - &z0) * a;
        }
        if !domain.contains_chart(&c) {
            continue;
        }
        out.push(project_to_horosphere(domain, o, xi, &c, level)?);
    }
    Ok(out)
}

fn worst_displacement(
    domain: &ConvexDomain,
    parabolics: &[ProjectiveMap],
    points: &[DVector<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        for p in parabolics {
            worst = worst.max(displacement_chart(domain, p, x)?);
        }
    }
    Ok(worst)
}

/// A horoball centered at `theta` on which every parabolic moves every
/// sampled point by less than `epsilon`.
///
/// Levels are Busemann values relative to `o` (negative levels are deeper).
/// The displacement of a parabolic on a horosphere is largest nowhere in
/// particular, so each tested level is sampled over a fundamental domain of
/// the parabolic group; deeper horoballs have smaller displacement.
pub fn short_loop_horoball(
    domain: &ConvexDomain,
    parabolics: &[ProjectiveMap],
    theta: &BoundaryPoint,
    epsilon: f64,
    o: &ProjectivePoint,
) -> Result<ShortLoopHoroball> {
    if parabolics.is_empty() || !(epsilon > 0.0) {
        return Err(GeometryError::InvalidDomain(
            "need parabolics and ε₀ > 0".into(),
        ));
    }
    let oc = domain
        .to_chart(o)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    let xi = domain.to_chart(theta.point())?;
    for p in parabolics {
        let image = domain
            .chart()
            .coords_of_vector(&p.apply_vector(&domain.chart().lift(&xi)))?;
        if (image - &xi).norm() > 1e-8 {
            return Err(GeometryError::InvalidDomain(
                "a generator does not fix the center".into(),
            ));
        }
    }
    let good = |level: f64| -> Result<(bool, f64)> {
        let sampled = horosphere_samples(domain, parabolics, &oc, &xi, level)
            .and_then(|pts| worst_displacement(domain, parabolics, &pts));
        match sampled {
            Ok(w) => Ok((w < epsilon, w)),
            Err(GeometryError::MapDoesNotPreserveDomain(_)) => Ok((false, f64::INFINITY)),
            Err(e) => Err(e),
        }
    };
    let mut steps = 0;
    let (mut hi, mut lo);
    if good(0.0)?.0 {
        hi = 0.0;
        lo = 0.0;
    } else {
        hi = 0.0;
        lo = -1.0;
        loop {
            steps += 1;
            if steps > MAX_BISECTION_STEPS {
                return Err(GeometryError::LevelNotFound {
                    steps: MAX_BISECTION_STEPS,
                });
            }
            if good(lo)?.0 {
                break;
            }
            hi = lo;
            lo *= 2.0;
            if lo < DEEPEST_LEVEL {
                return Err(GeometryError::LevelNotFound { steps });
            }
        }
    }
    while hi - lo > 1e-3 {
        steps += 1;
        if steps > MAX_BISECTION_STEPS {
            return Err(GeometryError::LevelNotFound {
                steps: MAX_BISECTION_STEPS,
            });
        }
        let mid = 0.5 * (hi + lo);
        if good(mid)?.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Conservative by one bisection step.
    let level = lo - (hi - lo).max(1e-3);
    let mut worst: f64 = 0.0;
    for l in [level, level - 1.0, level - 3.0] {
        let (ok, w) = good(l)?;
        worst = worst.max(w);
        if !ok {
            return Err(GeometryError::LevelNotFound { steps });
        }
    }
    let center = BoundaryPoint::new(domain, theta.point().clone(), Provenance::Explicit)?;
    Ok(ShortLoopHoroball {
        horoball: Horoball {
            center,
            basepoint: o.clone(),
            level,
        },
        steps,
        samples_per_level: LEVEL_SAMPLES,
        max_displacement: worst,
    })
}

/// Pass/fail per condition of the osculating-ellipsoid sandwich.
#[derive(Debug, Clone, Serialize)]
pub struct OsculationReport {
    pub inner_contained: bool,
    pub outer_contains: bool,
    pub inner_tangent: bool,
    pub outer_tangent: bool,
    pub inner_margin_at_theta: f64,
    pub outer_margin_at_theta: f64,
    pub samples: usize,
}

impl OsculationReport {
    pub fn passed(&self) -> bool {
        self.inner_contained && self.outer_contains && self.inner_tangent && self.outer_tangent
    }
}

/// Points of `d` approaching its boundary along random rays.
fn near_boundary_points(
    d: &ConvexDomain,
    samples: usize,
    seed: u64,
) -> Result<Vec<ProjectivePoint>> {
    let mut rng = rng::stream(seed, 0x05c);
    let o = d.basepoint_chart();
    let mut out = Vec::with_capacity(samples * 3);
    for _ in 0..samples {
        let u = rng::unit_vector(&mut rng, d.dim());
        let (_, t_b) = d.chord_params(&o, &u)?;
        for f in [0.5, 0.99, 0.9999] {
            out.push(d.from_chart(&(&o + &u * (t_b * f))));
        }
    }
    Ok(out)
}

/// Sampled check of `E_in ⊂ Ω ⊂ E_out` with both ellipsoids tangent to ∂Ω at θ.
pub fn osculating_ellipsoids(
    inner: &ConvexDomain,
    domain: &ConvexDomain,
    outer: &ConvexDomain,
    theta: &ProjectivePoint,
    samples: usize,
    seed: u64,
) -> Result<OsculationReport> {
    let inner_pts = near_boundary_points(inner, samples, seed)?;
    let domain_pts = near_boundary_points(domain, samples, seed ^ 1)?;
    let inner_contained = inner_pts.iter().all(|p| domain.contains(p));
    let outer_contains = domain_pts.iter().all(|p| outer.contains(p));
    let inner_margin = inner.margin(theta)?;
    let outer_margin = outer.margin(theta)?;
    Ok(OsculationReport {
        inner_contained,
        outer_contains,
        inner_tangent: inner_margin.abs() < 1e-8,
        outer_tangent: outer_margin.abs() < 1e-8,
        inner_margin_at_theta: inner_margin,
        outer_margin_at_theta: outer_margin,
        samples: inner_pts.len() + domain_pts.len(),
    })
}

/// The Klein-model horoball at `xi` (a unit vector of the unit ball's chart)
/// as an ellipsoid: `{X : ⟨X, ξ⟩² < c² · (−⟨X, X⟩)}` in Minkowski terms,
/// with `ξ = (1, xi)`. Larger `c` gives a larger horoball.
pub fn klein_horoball_ellipsoid(xi: &DVector<f64>, c: f64) -> Result<ConvexDomain> {
    let n = xi.len();
    let mut j = DMatrix::identity(n + 1, n + 1);
    j[(0, 0)] = -1.0;
    let mut null = DVector::zeros(n + 1);
    null[0] = 1.0;
    null.rows_mut(1, n).copy_from(xi);
    let jxi = &j * &null;
    let form = &jxi * jxi.transpose() + &j * (c * c);
    let chart = crate::projective::AffineChart::standard(n, 0);
    let interior = interior_point_of_horoball(xi, c);
    ConvexDomain::ellipsoid_in_chart(form, chart, ProjectivePoint::new(interior)?)
}

fn interior_point_of_horoball(xi: &DVector<f64>, c: f64) -> DVector<f64> {
    // X = (1, r·xi): ⟨X,ξ⟩ = r − 1, −⟨X,X⟩ = 1 − r²; need (1−r)² < c²(1−r²)
    // i.e. (1−r) < c²(1+r). Take r solving (1−r) = ½c²(1+r).
    let k = 0.5 * c * c;
    let r = (1.0 - k) / (1.0 + k);
    let mut x = DVector::zeros(xi.len() + 1);
    x[0] = 1.0;
    for i in 0..xi.len() {
        x[i + 1] = r * xi[i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::builtin;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    fn rotation(theta: f64) -> ProjectiveMap {
        let (s, c) = theta.sin_cos();
        ProjectiveMap::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, c, -s], vec![0.0, s, c]]).unwrap()
    }

    #[test]
    fn rotation_displacements() {
        let disc = ConvexDomain::unit_ball(2);
        let g = rotation(std::f64::consts::PI);
        assert!(displacement(&disc, &g, disc.basepoint()).unwrap() < 1e-15);
        let x = disc.from_chart(&v(&[0.5, 0.0]));
        let d = displacement(&disc, &g, &x).unwrap();
        assert!((d - 2.0 * 0.5f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn classification_of_model_isometries() {
        let disc = ConvexDomain::unit_ball(2);
        let p = builtin::sl2_lift(&[[1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(classify(&disc, &p).unwrap().kind, IsometryKind::Parabolic);
        let lambda: f64 = 1.7;
        let h = builtin::sl2_lift(&[[lambda, 0.0], [0.0, 1.0 / lambda]]);
        let c = classify(&disc, &h).unwrap();
        assert_eq!(c.kind, IsometryKind::Hyperbolic);
        assert!((c.displacement_infimum - 2.0 * lambda.ln()).abs() < 1e-6);
        let r = rotation(0.9);
        assert_eq!(
            classify(&disc, &r).unwrap().kind,
            IsometryKind::EllipticOrIdentity
        );
    }

    #[test]
    fn short_loops_in_the_disc_cusp() {
        let ex = builtin::parabolic_cyclic().unwrap();
        let theta =
            BoundaryPoint::new(&ex.domain, ex.cusp.clone().unwrap(), Provenance::Explicit).unwrap();
        let p = ex.group.generators()[0].clone();
        let o = ex.domain.basepoint().clone();
        let a = short_loop_horoball(&ex.domain, std::slice::from_ref(&p), &theta, 0.1, &o).unwrap();
        assert!(a.max_displacement < 0.1);
        let b =
            short_loop_horoball(&ex.domain, std::slice::from_ref(&p), &theta, 0.05, &o).unwrap();
        assert!(b.horoball.level < a.horoball.level);
        let p2 = p.compose(&p);
        let both = short_loop_horoball(&ex.domain, &[p, p2], &theta, 0.1, &o).unwrap();
        assert!(both.max_displacement < 0.1);
    }

    #[test]
    fn hyperbolic_element_has_no_short_loop_horoball() {
        let disc = ConvexDomain::unit_ball(2);
        let h = builtin::sl2_lift(&[[2.0, 0.0], [0.0, 0.5]]);
        let theta = BoundaryPoint::new(&disc, builtin::disc_cusp(), Provenance::Explicit).unwrap();
        let r = short_loop_horoball(&disc, &[h], &theta, 0.1, disc.basepoint());
        assert!(matches!(r, Err(GeometryError::LevelNotFound { .. })));
    }

    #[test]
    fn osculation_reports() {
        let disc = ConvexDomain::unit_ball(2);
        let theta = builtin::disc_cusp();
        let same = osculating_ellipsoids(&disc, &disc, &disc, &theta, 64, 1).unwrap();
        assert!(same.passed());
        let horo = klein_horoball_ellipsoid(&v(&[1.0, 0.0]), 0.5).unwrap();
        let report = osculating_ellipsoids(&horo, &disc, &disc, &theta, 64, 1).unwrap();
        assert!(report.passed(), "{report:?}");
        let shifted = horo
            .transformed(&builtin::sl2_lift(&[[1.0, 0.0], [0.3, 1.0]]))
            .unwrap();
        let bad = osculating_ellipsoids(&shifted, &disc, &disc, &theta, 64, 1).unwrap();
        assert!(!bad.inner_tangent);
    }
}
