//! Hilbert distance, its Finsler norm, geodesics and Busemann functions.

use nalgebra::DVector;

use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::projective::ProjectivePoint;
use crate::tolerances::TOLERANCES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ChordEndpoint,
    OrbitLimit,
    Explicit,
}

/// A point of ∂Ω.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    point: ProjectivePoint,
    provenance: Provenance,
}

impl BoundaryPoint {
    pub fn new(
        domain: &ConvexDomain,
        point: ProjectivePoint,
        provenance: Provenance,
    ) -> Result<Self> {
        let margin = domain.margin(&point)?;
        if margin.abs() > TOLERANCES.boundary_margin {
            return Err(GeometryError::InvalidDomain(format!(
                "boundary point has margin {margin:e}"
            )));
        }
        Ok(Self { point, provenance })
    }

    /// The forward endpoint of the ray from interior point `x` in chart direction `v`.
    pub fn along_ray(domain: &ConvexDomain, x: &ProjectivePoint, v: &DVector<f64>) -> Result<Self> {
        let chord = domain.chord(x, v)?;
        Ok(Self {
            point: chord.b,
            provenance: Provenance::ChordEndpoint,
        })
    }

    pub fn point(&self) -> &ProjectivePoint {
        &self.point
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// `½ log [a:x:y:b]` on the chord `x + t(y − x)`, `t_a < 0 < 1 < t_b`.
fn distance_from_params(t_a: f64, t_b: f64) -> f64 {
    0.5 * ((1.0 / -t_a).ln_1p() + (1.0 / (t_b - 1.0)).ln_1p())
}

/// Hilbert distance between chart points.
pub fn distance_chart(domain: &ConvexDomain, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let v = y - x;
    if v.amax() == 0.0 {
        if domain.contains_chart(x) {
            return Ok(0.0);
        }
        return Err(GeometryError::PointOutsideDomain);
    }
    if !domain.contains_chart(x) || !domain.contains_chart(y) {
        return Err(GeometryError::PointOutsideDomain);
    }
    let (t_a, t_b) = domain.chord_params(x, &v)?;
    if !(t_b > 1.0) {
        return Err(GeometryError::PointOutsideDomain);
    }
    Ok(distance_from_params(t_a, t_b))
}

/// `d_Ω(x, y) = ½ |log [a:x:y:b]|`.
pub fn hilbert_distance(
    domain: &ConvexDomain,
    x: &ProjectivePoint,
    y: &ProjectivePoint,
) -> Result<f64> {
    let xc = domain
        .to_chart(x)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    let yc = domain
        .to_chart(y)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    distance_chart(domain, &xc, &yc)
}

pub fn finsler_norm_chart(
    domain: &ConvexDomain,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    if !domain.contains_chart(x) {
        return Err(GeometryError::PointOutsideDomain);
    }
    if v.amax() == 0.0 {
        return Ok(0.0);
    }
    let (t_a, t_b) = domain.chord_params(x, v)?;
    Ok(0.5 * (1.0 / -t_a + 1.0 / t_b))
}

/// Infinitesimal Hilbert norm `F(x, v) = ½|v| (1/|x−a| + 1/|x−b|)`.
pub fn finsler_norm(domain: &ConvexDomain, x: &ProjectivePoint, v: &DVector<f64>) -> Result<f64> {
    let xc = domain
        .to_chart(x)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    finsler_norm_chart(domain, &xc, v)
}

/// Chart parameter at Hilbert distance `s` from the origin of a chord
/// towards its forward endpoint.
pub(crate) fn param_at_distance(t_a: f64, t_b: f64, s: f64) -> f64 {
    let r = (2.0 * s).exp();
    t_b * (-t_a) * (r - 1.0) / (t_b - r * t_a)
}

pub fn geodesic_point_chart(
    domain: &ConvexDomain,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    s: f64,
) -> Result<DVector<f64>> {
    if !domain.contains_chart(x) {
        return Err(GeometryError::PointOutsideDomain);
    }
    if s == 0.0 {
        return Ok(x.clone());
    }
    let v = xi - x;
    let (t_a, t_b) = domain.chord_params(x, &v)?;
    Ok(x + &v * param_at_distance(t_a, t_b, s))
}

/// The point of the ray `[x, ξ)` at Hilbert distance `s` from `x`.
pub fn geodesic_point(
    domain: &ConvexDomain,
    x: &ProjectivePoint,
    xi: &BoundaryPoint,
    s: f64,
) -> Result<ProjectivePoint> {
    if s < 0.0 {
        return Err(GeometryError::InvalidDomain(
            "negative geodesic time".into(),
        ));
    }
    let xc = domain
        .to_chart(x)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    let xic = domain.to_chart(xi.point())?;
    Ok(domain.from_chart(&geodesic_point_chart(domain, &xc, &xic, s)?))
}

/// Distance from interior point `p` to `xi + delta`, where `delta` is a tiny
/// offset from boundary point `xi` kept separately for precision.
fn distance_to_near_boundary(
    domain: &ConvexDomain,
    p: &DVector<f64>,
    xi: &DVector<f64>,
    delta: &DVector<f64>,
) -> Result<f64> {
    let w = (xi - p) + delta;
    let len = w.norm();
    let u = &w / len;
    let (t_a, _) = domain.chord_params(p, &u)?;
    let back = -t_a;
    let ahead = domain.exit_near_boundary(xi, delta, &u);
    if !(ahead > 0.0) {
        return Err(GeometryError::NonConvergent { spread: f64::NAN });
    }
    Ok(0.5 * ((len / back).ln_1p() + (len / ahead).ln_1p()))
}

/// Busemann value with the finite-t samples it was extrapolated from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusemannValue {
    pub value: f64,
    pub spread: f64,
    pub samples: [f64; 3],
}

pub fn busemann_chart(
    domain: &ConvexDomain,
    o: &DVector<f64>,
    xi: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<BusemannValue> {
    if !domain.contains_chart(o) || !domain.contains_chart(y) {
        return Err(GeometryError::PointOutsideDomain);
    }
    if (o - y).amax() == 0.0 {
        return Ok(BusemannValue {
            value: 0.0,
            spread: 0.0,
            samples: [0.0; 3],
        });
    }
    let v = xi - o;
    let (t_a, _) = domain.chord_params(o, &v)?;
    let mut samples = [0.0; 3];
    for (slot, &t) in samples.iter_mut().zip(TOLERANCES.busemann_times.iter()) {
        // Chart gap between c(t) and ξ, with ξ taken as the exact endpoint.
        let r = (2.0 * t).exp();
        let gap = (1.0 - t_a) / (1.0 - r * t_a);
        let delta = -&v * gap;
        *slot = distance_to_near_boundary(domain, y, xi, &delta)?
            - distance_to_near_boundary(domain, o, xi, &delta)?;
    }
    let spread = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let [f1, f2, f3] = samples;
    let (d1, d2) = (f2 - f1, f3 - f2);
    let value = if d1 != 0.0 && (d2 / d1) > 0.0 && (d2 / d1) < 1.0 && d2 != d1 {
        f3 - d2 * d2 / (d2 - d1)
    } else {
        f3
    };
    if !(spread <= TOLERANCES.busemann_spread) {
        return Err(GeometryError::NonConvergent { spread });
    }
    Ok(BusemannValue {
        value,
        spread,
        samples,
    })
}

/// `B_{o,ξ}(y) = lim_{t→∞} d(y, c(t)) − d(o, c(t))` along the ray from `o` to `ξ`.
pub fn busemann(
    domain: &ConvexDomain,
    o: &ProjectivePoint,
    xi: &BoundaryPoint,
    y: &ProjectivePoint,
) -> Result<BusemannValue> {
    let oc = domain
        .to_chart(o)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    let yc = domain
        .to_chart(y)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    let xic = domain.to_chart(xi.point())?;
    busemann_chart(domain, &oc, &xic, &yc)
}

/// Sub-level set `{y : B_{o,ξ}(y) < level}`.
#[derive(Debug, Clone)]
pub struct Horoball {
    pub center: BoundaryPoint,
    pub basepoint: ProjectivePoint,
    pub level: f64,
}

impl Horoball {
    pub fn contains(&self, domain: &ConvexDomain, y: &ProjectivePoint) -> Result<bool> {
        Ok(busemann(domain, &self.basepoint, &self.center, y)?.value < self.level)
    }

    /// Point of the horosphere on the ray from the basepoint to the center.
    pub fn apex(&self, domain: &ConvexDomain) -> Result<ProjectivePoint> {
        if self.level <= 0.0 {
            geodesic_point(domain, &self.basepoint, &self.center, -self.level)
        } else {
            let o = domain.to_chart(&self.basepoint)?;
            let xi = domain.to_chart(self.center.point())?;
            let dir = &xi - &o;
            let (t_a, _) = domain.chord_params(&o, &dir)?;
            let far = &o + dir * t_a;
            Ok(domain.from_chart(&geodesic_point_chart(domain, &o, &far, self.level)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::ProjectiveMap;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn klein_distance_from_origin() {
        let ball = ConvexDomain::unit_ball(2);
        let d = distance_chart(&ball, &v(&[0.0, 0.0]), &v(&[0.5, 0.0])).unwrap();
        assert!((d - 0.5f64.atanh()).abs() < 1e-15);
        assert!((d - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert_eq!(
            distance_chart(&ball, &v(&[0.3, 0.1]), &v(&[0.3, 0.1])).unwrap(),
            0.0
        );
    }

    #[test]
    fn distance_rejects_exterior_points() {
        let ball = ConvexDomain::unit_ball(2);
        assert_eq!(
            distance_chart(&ball, &v(&[0.0, 0.0]), &v(&[1.2, 0.0])),
            Err(GeometryError::PointOutsideDomain)
        );
    }

    #[test]
    fn finsler_norm_examples() {
        let ball = ConvexDomain::unit_ball(2);
        let f = finsler_norm_chart(&ball, &v(&[0.0, 0.0]), &v(&[0.3, -0.4])).unwrap();
        assert!((f - 0.5).abs() < 1e-15);
        let f = finsler_norm_chart(&ball, &v(&[0.5, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((f - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn geodesic_point_inverts_distance() {
        let ball = ConvexDomain::unit_ball(2);
        let p =
            geodesic_point_chart(&ball, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]), 0.5f64.atanh()).unwrap();
        assert!((p - v(&[0.5, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn busemann_on_the_klein_disc() {
        let ball = ConvexDomain::unit_ball(2);
        let b = busemann_chart(&ball, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]), &v(&[0.5, 0.0])).unwrap();
        assert!((b.value + 0.5f64.atanh()).abs() < 1e-9, "{b:?}");
    }

    #[test]
    fn busemann_is_invariant_under_projective_maps() {
        let ball = ConvexDomain::unit_ball(2);
        let g = ProjectiveMap::from_rows(&[
            vec![1.0, 0.3, 0.0],
            vec![0.2, 1.1, 0.1],
            vec![0.0, 0.0, 0.7],
        ])
        .unwrap();
        let image = ball.transformed(&g).unwrap();
        let o = ball.from_chart(&v(&[0.1, 0.2]));
        let y = ball.from_chart(&v(&[-0.4, 0.3]));
        let xi = BoundaryPoint::along_ray(&ball, &o, &v(&[0.6, 0.8])).unwrap();
        let b = busemann(&ball, &o, &xi, &y).unwrap().value;
        let gxi = BoundaryPoint::new(&image, g.apply(xi.point()), Provenance::Explicit).unwrap();
        let gb = busemann(&image, &g.apply(&o), &gxi, &g.apply(&y))
            .unwrap()
            .value;
        assert!((b - gb).abs() < 1e-8, "{b} vs {gb}");
    }

    #[test]
    fn busemann_on_p_ball_converges() {
        let ball = ConvexDomain::p_norm_ball(4.0, nalgebra::DMatrix::identity(3, 3)).unwrap();
        let o = v(&[0.0, 0.0]);
        let u = v(&[0.6, 0.8]);
        let (_, t_b) = ball.chord_params(&o, &u).unwrap();
        let xi = &u * t_b;
        let b = busemann_chart(&ball, &o, &xi, &v(&[0.2, -0.1])).unwrap();
        assert!(b.spread < 1e-9, "{b:?}");
    }

    #[test]
    fn horoball_membership_uses_the_level() {
        let ball = ConvexDomain::unit_ball(2);
        let o = ball.basepoint().clone();
        let center = BoundaryPoint::along_ray(&ball, &o, &v(&[1.0, 0.0])).unwrap();
        let h = Horoball {
            center,
            basepoint: o,
            level: -0.5,
        };
        assert!(h
            .contains(&ball, &ball.from_chart(&v(&[0.9, 0.0])))
            .unwrap());
        assert!(!h
            .contains(&ball, &ball.from_chart(&v(&[0.0, 0.0])))
            .unwrap());
        let apex = h.apex(&ball).unwrap();
        let b = busemann(&ball, &h.basepoint, &h.center, &apex)
            .unwrap()
            .value;
        assert!((b + 0.5).abs() < 1e-9);
    }
}
