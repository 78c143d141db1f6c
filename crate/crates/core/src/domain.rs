//! Properly convex domains given by a membership test and a chord oracle.
//!
//! All geometry is done in a chart fixed at construction, in which the
//! domain is bounded. A chord through a chart point `x` with direction `v` is
//! reported by its two parameters `t_a < 0 < t_b`, so the boundary points are
//! `x + t_a v` and `x + t_b v`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::group::ProjectiveGroup;
use crate::projective::{AffineChart, ProjectiveMap, ProjectivePoint};
use crate::rng;
use crate::tolerances::TOLERANCES;

/// Relative margin used for the open-set membership test.
const OPEN_MARGIN: f64 = 1e-13;
/// Hulls with fewer vertices are scanned facet by facet.
const LINEAR_SCAN: usize = 32;
const BISECTION_STEPS: usize = 80;
const NEWTON_STEPS: usize = 5;

#[derive(Debug, Clone)]
pub struct Ellipsoid {
    /// Quadratic form, unit Frobenius norm, exactly one negative eigenvalue.
    form: DMatrix<f64>,
    // q(x) = xᵀ A x + 2 bᵀ x + k in chart coordinates.
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

#[derive(Debug, Clone)]
pub struct PNormBall {
    p: f64,
    frame: DMatrix<f64>,
    // Maps chart coordinates to frame coordinates: w = offset + linear · c.
    offset: DVector<f64>,
    linear: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Facet {
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// Chart-space convex hull of a finite group orbit (planar domains only).
#[derive(Debug, Clone)]
pub struct OrbitHull {
    pub group_label: String,
    pub seed: ProjectivePoint,
    pub depth: usize,
    vertices: Vec<DVector<f64>>,
    facets: Vec<Facet>,
    center: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum DomainKind {
    Ellipsoid(Ellipsoid),
    PNormBall(PNormBall),
    OrbitHull(OrbitHull),
}

#[derive(Debug, Clone)]
pub struct ConvexDomain {
    kind: DomainKind,
    chart: AffineChart,
    basepoint: ProjectivePoint,
    approximation: bool,
}

/// The two boundary points of the line through an interior point.
#[derive(Debug, Clone)]
pub struct Chord {
    /// Hit in direction `-v`.
    pub a: ProjectivePoint,
    /// Hit in direction `+v`.
    pub b: ProjectivePoint,
    pub t_a: f64,
    pub t_b: f64,
    pub origin: DVector<f64>,
    pub direction: DVector<f64>,
}

impl Chord {
    pub fn a_chart(&self) -> DVector<f64> {
        &self.origin + &self.direction * self.t_a
    }

    pub fn b_chart(&self) -> DVector<f64> {
        &self.origin + &self.direction * self.t_b
    }
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl Ellipsoid {
    fn new(form: &DMatrix<f64>, chart: &AffineChart) -> Result<Self> {
        let form = symmetric_part(form);
        let form = &form / form.norm();
        let lift0 = chart.lift(&DVector::zeros(chart.dim()));
        let basis = DMatrix::from_columns(
            &(0..chart.dim())
                .map(|i| {
                    let mut e = DVector::zeros(chart.dim());
                    e[i] = 1.0;
                    chart.lift_direction(&e)
                })
                .collect::<Vec<_>>(),
        );
        let quad = basis.transpose() * &form * &basis;
        let lin = basis.transpose() * &form * &lift0;
        let constant = lift0.dot(&(&form * &lift0));
        if quad.clone().cholesky().is_none() {
            return Err(GeometryError::InvalidDomain(
                "ellipsoid is not bounded in its chart".into(),
            ));
        }
        Ok(Self {
            form,
            quad,
            lin,
            constant,
        })
    }

    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }

    fn value(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.quad * c)) + 2.0 * self.lin.dot(c) + self.constant
    }

    fn gradient(&self, c: &DVector<f64>) -> DVector<f64> {
        (&self.quad * c + &self.lin) * 2.0
    }

    fn chord(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
        let a = v.dot(&(&self.quad * v));
        let b = v.dot(&(&self.quad * x + &self.lin));
        let c = self.value(x);
        if a <= 0.0 {
            return Err(GeometryError::DegenerateChord(
                "line does not meet the ellipsoid boundary twice".into(),
            ));
        }
        let disc = b * b - a * c;
        if disc <= 0.0 {
            return Err(GeometryError::DegenerateChord(
                "line misses the ellipsoid".into(),
            ));
        }
        let q = -(b + b.signum() * disc.sqrt());
        let (r1, r2) = if q == 0.0 {
            let r = (-c / a).sqrt();
            (-r, r)
        } else {
            (q / a, c / q)
        };
        Ok((r1.min(r2), r1.max(r2)))
    }

    /// Forward exit from `xi + delta` along `u`, treating `xi` as exactly on the boundary.
    fn exit_near(&self, xi: &DVector<f64>, delta: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let g = &self.quad * xi + &self.lin;
        let au = &self.quad * u;
        let c2 = u.dot(&au);
        let c1 = 2.0 * (u.dot(&g) + au.dot(delta));
        let c0 = 2.0 * delta.dot(&g) + delta.dot(&(&self.quad * delta));
        let disc = (c1 * c1 - 4.0 * c2 * c0).max(0.0);
        let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
        let roots = [q / c2, if q != 0.0 { c0 / q } else { 0.0 }];
        roots.into_iter().fold(
            f64::NAN,
            |acc, r| {
                if r > 0.0 && !(acc > r) {
                    r
                } else {
                    acc
                }
            },
        )
    }
}

impl PNormBall {
    fn new(p: f64, frame: &DMatrix<f64>, chart: &AffineChart) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(GeometryError::InvalidDomain(format!(
                "p = {p} must exceed 1"
            )));
        }
        let inv = frame
            .clone()
            .try_inverse()
            .ok_or(GeometryError::SingularMatrix { det: 0.0 })?;
        let offset = &inv * chart.lift(&DVector::zeros(chart.dim()));
        let linear = DMatrix::from_columns(
            &(0..chart.dim())
                .map(|i| {
                    let mut e = DVector::zeros(chart.dim());
                    e[i] = 1.0;
                    &inv * chart.lift_direction(&e)
                })
                .collect::<Vec<_>>(),
        );
        if linear.row(0).amax() > 1e-12 * linear.amax().max(1.0) {
            return Err(GeometryError::InvalidDomain(
                "p-ball chart must be the frame's own chart".into(),
            ));
        }
        Ok(Self {
            p,
            frame: frame.clone(),
            offset,
            linear,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    fn frame_coords(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.linear * c
    }

    /// `‖w₁..ₙ‖_p / |w₀| − 1`.
    fn margin(&self, c: &DVector<f64>) -> f64 {
        let w = self.frame_coords(c);
        let s: f64 = w.iter().skip(1).map(|x| x.abs().powf(self.p)).sum();
        s.powf(1.0 / self.p) / w[0].abs() - 1.0
    }

    /// Change of `Σ|wᵢ|ᵖ / |w₀|ᵖ` between `xi` and `xi + eps`, with full
    /// relative precision for tiny `eps`.
    fn local_margin(&self, xi: &DVector<f64>, eps: &DVector<f64>) -> f64 {
        let w = self.frame_coords(xi);
        let e = &self.linear * eps;
        let p = self.p;
        let mut s = 0.0;
        let mut ds = 0.0;
        for i in 1..w.len() {
            let wi = w[i].abs();
            s += wi.powf(p);
            if w[i] == 0.0 {
                ds += e[i].abs().powf(p);
            } else {
                ds += wi.powf(p) * (p * (e[i] / w[i]).ln_1p()).exp_m1();
            }
        }
        let scale = (-p * (e[0] / w[0]).ln_1p()).exp_m1();
        (ds * (1.0 + scale) + s * scale) / w[0].abs().powf(p)
    }

    fn chord(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
        let fwd = exit_parameter(|t| self.margin(&(x + v * t)), v.norm())?;
        let bwd = exit_parameter(|t| self.margin(&(x - v * t)), v.norm())?;
        Ok((-bwd, fwd))
    }

    fn exit_near(&self, xi: &DVector<f64>, delta: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let f = |s: f64| self.local_margin(xi, &(delta + u * s));
        let mut hi = delta.norm().max(f64::MIN_POSITIVE);
        let mut lo = 0.0;
        let mut guard = 0;
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return f64::NAN;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Root of a convex-set margin along a ray: exponential bracketing, bisection,
/// then a few guarded Newton steps.
fn exit_parameter(margin: impl Fn(f64) -> f64, speed: f64) -> Result<f64> {
    if speed == 0.0 {
        return Err(GeometryError::DegenerateChord("zero direction".into()));
    }
    let limit = TOLERANCES.chart_bound / speed;
    let mut lo = 0.0;
    let mut hi = 1e-3 / speed;
    while margin(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(GeometryError::DegenerateChord(
                "line leaves the chart before the boundary".into(),
            ));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if margin(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..NEWTON_STEPS {
        let f = margin(t);
        if f == 0.0 {
            break;
        }
        let h = 1e-7 * t.abs().max(1e-12);
        let df = (margin(t + h) - margin(t - h)) / (2.0 * h);
        if !(df > 0.0) {
            break;
        }
        let next = t - f / df;
        if !(next > lo && next < hi) || margin(next).abs() >= f.abs() {
            break;
        }
        t = next;
    }
    Ok(t)
}

fn cross2(o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull, collinear points dropped.
fn planar_hull(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut pts: Vec<DVector<f64>> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (&*a - &*b).amax() < 1e-14);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<DVector<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross2(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<DVector<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

impl OrbitHull {
    fn from_points(
        group_label: String,
        seed: ProjectivePoint,
        depth: usize,
        chart_points: &[DVector<f64>],
    ) -> Result<Self> {
        if chart_points.first().is_none_or(|p| p.len() != 2) {
            return Err(GeometryError::Unsupported(
                "orbit hulls are implemented for planar domains".into(),
            ));
        }
        let vertices = planar_hull(chart_points);
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidDomain(
                "orbit hull is degenerate".into(),
            ));
        }
        let facets = (0..vertices.len())
            .map(|i| {
                let p = &vertices[i];
                let q = &vertices[(i + 1) % vertices.len()];
                let normal = DVector::from_vec(vec![q[1] - p[1], p[0] - q[0]]);
                let normal = &normal / normal.norm();
                Facet {
                    offset: normal.dot(p),
                    normal,
                }
            })
            .collect();
        let center =
            vertices.iter().fold(DVector::zeros(2), |acc, v| acc + v) / vertices.len() as f64;
        Ok(Self {
            group_label,
            seed,
            depth,
            vertices,
            facets,
            center,
        })
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    fn facet_value(&self, i: usize, c: &DVector<f64>) -> f64 {
        let f = &self.facets[i % self.facets.len()];
        f.normal.dot(c) - f.offset
    }

    /// Margin over the facets near the ray from the vertex centroid through
    /// `c` (binary search on vertex angles). Its sign is exact: the hull meets
    /// that angular wedge in a triangle bounded by the middle facet.
    fn margin(&self, c: &DVector<f64>) -> f64 {
        let v = self.vertices.len();
        if v < LINEAR_SCAN {
            return (0..v)
                .map(|i| self.facet_value(i, c))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let i = self.wedge_at(&self.center, &(c - &self.center));
        [i + v - 1, i, i + 1]
            .iter()
            .map(|&k| self.facet_value(k, c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index `i` of the facet `(v_i, v_{i+1})` hit by the ray from interior
    /// point `x` in direction `d`.
    fn wedge_at(&self, x: &DVector<f64>, d: &DVector<f64>) -> usize {
        use std::f64::consts::TAU;
        let v = self.vertices.len();
        let phi = |k: usize| -> f64 {
            let w = &self.vertices[k] - x;
            let a = (d[0] * w[1] - d[1] * w[0]).atan2(d[0] * w[0] + d[1] * w[1]);
            if a < 0.0 {
                a + TAU
            } else {
                a
            }
        };
        let phi0 = phi(0);
        // First k ≥ 1 past the wrap of the cyclically increasing angles.
        let (mut lo, mut hi) = (1, v);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if phi(mid) < phi0 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (lo + v - 1) % v
    }

    fn exit_along(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let i = self.wedge_at(x, d);
        let p = &self.vertices[i];
        let q = &self.vertices[(i + 1) % self.vertices.len()];
        let e = q - p;
        let px = p - x;
        (px[0] * e[1] - px[1] * e[0]) / (d[0] * e[1] - d[1] * e[0])
    }

    fn chord(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
        if self.vertices.len() >= LINEAR_SCAN && self.margin(x) < 0.0 {
            let t_b = self.exit_along(x, v);
            let t_a = -self.exit_along(x, &-v);
            if t_a.is_finite() && t_b.is_finite() && t_a < 0.0 && t_b > 0.0 {
                return Ok((t_a, t_b));
            }
        }
        self.scan_chord(x, v)
    }

    fn scan_chord(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
        let mut t_a = f64::NEG_INFINITY;
        let mut t_b = f64::INFINITY;
        for f in &self.facets {
            let nv = f.normal.dot(v);
            let gap = f.offset - f.normal.dot(x);
            if nv > 0.0 {
                t_b = t_b.min(gap / nv);
            } else if nv < 0.0 {
                t_a = t_a.max(gap / nv);
            }
        }
        if !t_a.is_finite() || !t_b.is_finite() {
            return Err(GeometryError::DegenerateChord(
                "unbounded hull chord".into(),
            ));
        }
        Ok((t_a, t_b))
    }

    fn exit_near(&self, xi: &DVector<f64>, delta: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for f in &self.facets {
            let nu = f.normal.dot(u);
            if nu <= 0.0 {
                continue;
            }
            let mut residual = f.normal.dot(xi) - f.offset;
            if residual.abs() < 1e-12 {
                residual = 0.0;
            }
            best = best.min(-(residual + f.normal.dot(delta)) / nu);
        }
        best
    }
}

/// Bounding chart for a set of homogeneous vectors lying in one convex cone.
fn centroid_chart(vectors: &[DVector<f64>], reference: &DVector<f64>) -> Result<AffineChart> {
    let mut sum = DVector::zeros(reference.len());
    for v in vectors {
        let u = v / v.norm();
        sum += if u.dot(reference) < 0.0 { -u } else { u };
    }
    let chart = AffineChart::new(sum)?;
    let positive = vectors.iter().all(|v| {
        let f = chart.evaluate(v) / v.norm();
        f.abs() > 1e-6
    });
    if !positive {
        return Err(GeometryError::InvalidDomain(
            "no chart bounds the orbit; supply one explicitly".into(),
        ));
    }
    Ok(chart)
}

impl ConvexDomain {
    /// Ellipsoid `{[x] : xᵀQx < 0}` in the chart dual to Q's negative eigenvector.
    pub fn ellipsoid(form: DMatrix<f64>) -> Result<Self> {
        let n1 = form.nrows();
        if !form.is_square() || n1 < 2 {
            return Err(GeometryError::InvalidDomain("form must be square".into()));
        }
        let sym = symmetric_part(&form);
        if (&sym - &form).amax() > 1e-12 * form.amax() {
            return Err(GeometryError::InvalidDomain(
                "form must be symmetric".into(),
            ));
        }
        let eig = sym.clone().symmetric_eigen();
        let negatives: Vec<usize> = (0..n1).filter(|&i| eig.eigenvalues[i] < 0.0).collect();
        let scale = eig.eigenvalues.amax();
        let zero = (0..n1).any(|i| eig.eigenvalues[i].abs() <= 1e-12 * scale);
        if negatives.len() != 1 || zero {
            return Err(GeometryError::InvalidDomain(
                "form must have exactly one negative eigenvalue and no kernel".into(),
            ));
        }
        let center = eig.eigenvectors.column(negatives[0]).into_owned();
        let chart = if let Some(k) = (0..n1).find(|&k| (center[k].abs() - 1.0).abs() < 1e-12) {
            AffineChart::standard(n1 - 1, k)
        } else {
            AffineChart::new(center.clone())?
        };
        let basepoint = ProjectivePoint::new(center)?;
        Self::ellipsoid_in_chart(sym, chart, basepoint)
    }

    pub fn ellipsoid_in_chart(
        form: DMatrix<f64>,
        chart: AffineChart,
        basepoint: ProjectivePoint,
    ) -> Result<Self> {
        let kind = DomainKind::Ellipsoid(Ellipsoid::new(&form, &chart)?);
        Self::assemble(kind, chart, basepoint, false)
    }

    /// The unit ball of the standard chart `x₀ = 1`, the Klein model of ℍⁿ.
    pub fn unit_ball(n: usize) -> Self {
        let mut q = DMatrix::identity(n + 1, n + 1);
        q[(0, 0)] = -1.0;
        Self::ellipsoid(q).expect("unit ball is a valid ellipsoid")
    }

    /// `frame · {[1 : w] : ‖w‖_p < 1}`.
    pub fn p_norm_ball(p: f64, frame: DMatrix<f64>) -> Result<Self> {
        let inv = frame
            .clone()
            .try_inverse()
            .ok_or(GeometryError::SingularMatrix { det: 0.0 })?;
        let functional = inv.row(0).transpose();
        let chart = AffineChart::new(functional)?;
        let n1 = frame.nrows();
        let mut e0 = DVector::zeros(n1);
        e0[0] = 1.0;
        let basepoint = ProjectivePoint::new(&frame * e0)?;
        let kind = DomainKind::PNormBall(PNormBall::new(p, &frame, &chart)?);
        Self::assemble(kind, chart, basepoint, false)
    }

    /// Convex hull of `{γ·seed : |γ| ≤ depth}`. The chart is the centroid
    /// direction of the orbit unless one is given.
    pub fn orbit_hull(
        group: &ProjectiveGroup,
        seed: &ProjectivePoint,
        depth: usize,
        chart: Option<AffineChart>,
    ) -> Result<Self> {
        let seed_vec = seed.coords().clone();
        let orbit: Vec<DVector<f64>> = group
            .elements_up_to(depth)
            .iter()
            .map(|(_, g)| g.apply_vector(&seed_vec))
            .collect();
        let chart = match chart {
            Some(c) => c,
            None => centroid_chart(&orbit, &seed_vec)?,
        };
        let pts = orbit
            .iter()
            .map(|v| chart.coords_of_vector(v))
            .collect::<Result<Vec<_>>>()?;
        let hull = OrbitHull::from_points(group.label().to_string(), seed.clone(), depth, &pts)?;
        let center = hull
            .vertices
            .iter()
            .fold(DVector::zeros(2), |acc, v| acc + v)
            / hull.vertices.len() as f64;
        let basepoint = chart.from_chart(&center);
        Self::assemble(DomainKind::OrbitHull(hull), chart, basepoint, true)
    }

    fn assemble(
        kind: DomainKind,
        chart: AffineChart,
        basepoint: ProjectivePoint,
        approximation: bool,
    ) -> Result<Self> {
        let domain = Self {
            kind,
            chart,
            basepoint,
            approximation,
        };
        if !domain.contains(&domain.basepoint) {
            return Err(GeometryError::InvalidDomain(
                "basepoint is not interior".into(),
            ));
        }
        Ok(domain)
    }

    /// Replace the interior basepoint.
    pub fn with_basepoint(mut self, basepoint: ProjectivePoint) -> Result<Self> {
        if !self.contains(&basepoint) {
            return Err(GeometryError::PointOutsideDomain);
        }
        self.basepoint = basepoint;
        Ok(self)
    }

    /// The image `g(Ω)` with the transported chart.
    pub fn transformed(&self, g: &ProjectiveMap) -> Result<Self> {
        let chart = self.chart.transported(g);
        let basepoint = g.apply(&self.basepoint);
        match &self.kind {
            DomainKind::Ellipsoid(e) => {
                let inv = g.inverse();
                let form = inv.matrix().transpose() * e.form() * inv.matrix();
                Self::ellipsoid_in_chart(form, chart, basepoint)
            }
            DomainKind::PNormBall(b) => {
                let frame = g.matrix() * b.frame();
                let kind = DomainKind::PNormBall(PNormBall::new(b.p, &frame, &chart)?);
                Self::assemble(kind, chart, basepoint, false)
            }
            DomainKind::OrbitHull(h) => {
                let pts = h
                    .vertices
                    .iter()
                    .map(|c| chart.coords_of_vector(&g.apply_vector(&self.chart.lift(c))))
                    .collect::<Result<Vec<_>>>()?;
                let hull =
                    OrbitHull::from_points(h.group_label.clone(), g.apply(&h.seed), h.depth, &pts)?;
                Self::assemble(DomainKind::OrbitHull(hull), chart, basepoint, true)
            }
        }
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn chart(&self) -> &AffineChart {
        &self.chart
    }

    pub fn basepoint(&self) -> &ProjectivePoint {
        &self.basepoint
    }

    pub fn basepoint_chart(&self) -> DVector<f64> {
        self.chart
            .to_chart(&self.basepoint)
            .expect("basepoint is in the chart")
    }

    /// True for polytope approximations whose strict convexity is not checked.
    pub fn is_approximation(&self) -> bool {
        self.approximation
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            DomainKind::Ellipsoid(_) => "ellipsoid",
            DomainKind::PNormBall(_) => "pball",
            DomainKind::OrbitHull(_) => "orbit_hull",
        }
    }

    pub fn ellipsoid_form(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            DomainKind::Ellipsoid(e) => Some(e.form()),
            _ => None,
        }
    }

    /// Signed membership margin at a chart point: negative inside, zero on the
    /// boundary. Ellipsoids report `q/|X|²` for the unit-norm form.
    pub fn margin_chart(&self, c: &DVector<f64>) -> f64 {
        match &self.kind {
            DomainKind::Ellipsoid(e) => e.value(c) / self.chart.lift(c).norm_squared(),
            DomainKind::PNormBall(b) => b.margin(c),
            DomainKind::OrbitHull(h) => h.margin(c),
        }
    }

    pub fn contains_chart(&self, c: &DVector<f64>) -> bool {
        c.iter().all(|x| x.is_finite()) && self.margin_chart(c) < -OPEN_MARGIN
    }

    pub fn contains(&self, p: &ProjectivePoint) -> bool {
        if p.coords().len() != self.dim() + 1 {
            return false;
        }
        match self.chart.to_chart(p) {
            Ok(c) => self.contains_chart(&c),
            Err(_) => false,
        }
    }

    /// Boundary margin of a projective point (PointAtInfinity if off-chart).
    pub fn margin(&self, p: &ProjectivePoint) -> Result<f64> {
        Ok(self.margin_chart(&self.chart.to_chart(p)?))
    }

    pub fn to_chart(&self, p: &ProjectivePoint) -> Result<DVector<f64>> {
        self.chart.to_chart(p)
    }

    pub fn from_chart(&self, c: &DVector<f64>) -> ProjectivePoint {
        self.chart.from_chart(c)
    }

    /// Chord parameters through an interior chart point.
    pub fn chord_params(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
        if v.norm() == 0.0 {
            return Err(GeometryError::DegenerateChord("zero direction".into()));
        }
        let (t_a, t_b) = match &self.kind {
            DomainKind::Ellipsoid(e) => e.chord(x, v)?,
            DomainKind::PNormBall(b) => b.chord(x, v)?,
            DomainKind::OrbitHull(h) => h.chord(x, v)?,
        };
        let reach = t_a.abs().max(t_b.abs()) * v.norm() + x.norm();
        if !(t_a < 0.0 && t_b > 0.0) || reach > TOLERANCES.chart_bound {
            return Err(GeometryError::DegenerateChord(format!(
                "chord parameters ({t_a}, {t_b}) do not bracket the point"
            )));
        }
        Ok((t_a, t_b))
    }

    /// The chord through interior point `x` in chart direction `v`.
    pub fn chord(&self, x: &ProjectivePoint, v: &DVector<f64>) -> Result<Chord> {
        if !self.contains(x) {
            return Err(GeometryError::PointOutsideDomain);
        }
        let origin = self.chart.to_chart(x)?;
        let (t_a, t_b) = self.chord_params(&origin, v)?;
        Ok(Chord {
            a: self.chart.from_chart(&(&origin + v * t_a)),
            b: self.chart.from_chart(&(&origin + v * t_b)),
            t_a,
            t_b,
            origin,
            direction: v.clone(),
        })
    }

    /// Distance `s > 0` from `xi + delta` to the boundary along unit direction
    /// `u`, computed relative to boundary point `xi` so that tiny offsets keep
    /// full relative precision.
    pub(crate) fn exit_near_boundary(
        &self,
        xi: &DVector<f64>,
        delta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> f64 {
        match &self.kind {
            DomainKind::Ellipsoid(e) => e.exit_near(xi, delta, u),
            DomainKind::PNormBall(b) => b.exit_near(xi, delta, u),
            DomainKind::OrbitHull(h) => h.exit_near(xi, delta, u),
        }
    }

    /// Outward normal of the boundary at a chart point, when it is defined.
    pub fn boundary_normal(&self, c: &DVector<f64>) -> Option<DVector<f64>> {
        let g = match &self.kind {
            DomainKind::Ellipsoid(e) => e.gradient(c),
            DomainKind::PNormBall(b) => {
                let h = 1e-7;
                DVector::from_fn(c.len(), |i, _| {
                    let mut e = DVector::zeros(c.len());
                    e[i] = h;
                    (b.margin(&(c + &e)) - b.margin(&(c - &e))) / (2.0 * h)
                })
            }
            DomainKind::OrbitHull(h) => {
                let active: Vec<&Facet> = h
                    .facets
                    .iter()
                    .filter(|f| (f.normal.dot(c) - f.offset).abs() < 1e-9)
                    .collect();
                if active.len() != 1 {
                    return None;
                }
                active[0].normal.clone()
            }
        };
        let n = g.norm();
        (n > 0.0).then(|| g / n)
    }

    /// Sampled checks of the domain invariants: chord endpoints bounded and on
    /// the boundary, segments between interior points interior, and (unless the
    /// domain is a polytope approximation) open chords between boundary points
    /// interior.
    pub fn validate(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = rng::stream(seed, 0xd0);
        let x0 = self.basepoint_chart();
        let mut boundary = Vec::with_capacity(samples);
        for _ in 0..samples {
            let v = rng::unit_vector(&mut rng, self.dim());
            let (t_a, t_b) = self.chord_params(&x0, &v)?;
            for t in [t_a, t_b] {
                let c = &x0 + &v * t;
                if c.amax() > TOLERANCES.chart_bound {
                    return Err(GeometryError::InvalidDomain("unbounded in chart".into()));
                }
                let m = self.margin_chart(&c);
                if m.abs() > 1e-8 {
                    return Err(GeometryError::InvalidDomain(format!(
                        "chord endpoint margin {m:e}"
                    )));
                }
                boundary.push(c);
            }
        }
        use rand::Rng;
        for _ in 0..samples {
            let i = rng.random_range(0..boundary.len());
            let j = rng.random_range(0..boundary.len());
            let s: f64 = rng.random_range(0.05..0.95);
            let t: f64 = rng.random_range(0.05..0.95);
            let p = &x0 + (&boundary[i] - &x0) * s;
            let q = &x0 + (&boundary[j] - &x0) * t;
            let mid = (&p + &q) * 0.5;
            if !self.contains_chart(&mid) {
                return Err(GeometryError::InvalidDomain(
                    "not convex on a sample".into(),
                ));
            }
            if !self.approximation && (&boundary[i] - &boundary[j]).norm() > 1e-6 {
                let mid = (&boundary[i] + &boundary[j]) * 0.5;
                if !self.contains_chart(&mid) {
                    return Err(GeometryError::InvalidDomain(
                        "not strictly convex on a sample".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// JSON domain descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainDescriptor {
    Ellipsoid {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    Pball {
        p: f64,
        frame: Vec<Vec<f64>>,
    },
    OrbitHull {
        group: String,
        seed: Vec<f64>,
        depth: usize,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(GeometryError::InvalidDomain("matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl DomainDescriptor {
    /// Build the domain; orbit hulls need the group their label names.
    pub fn build(&self, group: Option<&ProjectiveGroup>) -> Result<ConvexDomain> {
        match self {
            Self::Ellipsoid { q } => ConvexDomain::ellipsoid(matrix_from_rows(q)?),
            Self::Pball { p, frame } => ConvexDomain::p_norm_ball(*p, matrix_from_rows(frame)?),
            Self::OrbitHull {
                group: label,
                seed,
                depth,
            } => {
                let g = group.filter(|g| g.label() == label).ok_or_else(|| {
                    GeometryError::InvalidDomain(format!("unknown group label {label:?}"))
                })?;
                let seed = ProjectivePoint::from_slice(seed)?;
                ConvexDomain::orbit_hull(g, &seed, *depth, g.preferred_chart().cloned())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn large_hull_lookup_matches_facet_scan() {
        let ex = crate::group::builtin::coxeter_deformation(4, 4, 4, 0.3, 10).unwrap();
        let DomainKind::OrbitHull(hull) = ex.domain.kind() else {
            panic!("orbit hull expected")
        };
        assert!(hull.vertices().len() > LINEAR_SCAN);
        let mut r = rng::stream(3, 0);
        let x0 = ex.domain.basepoint_chart();
        for _ in 0..500 {
            let dir = rng::unit_vector(&mut r, 2);
            let (_, t_b) = hull.scan_chord(&x0, &dir).unwrap();
            let x = &x0 + &dir * (t_b * r.random::<f64>());
            let w = rng::unit_vector(&mut r, 2);
            let fast = hull.chord(&x, &w).unwrap();
            let slow = hull.scan_chord(&x, &w).unwrap();
            assert!((fast.0 - slow.0).abs() < 1e-12 && (fast.1 - slow.1).abs() < 1e-12);
            let full = hull
                .facets()
                .iter()
                .map(|f| f.normal.dot(&x) - f.offset)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(hull.margin(&x) < 0.0 && full < 0.0);
            let outside = &x0 + &dir * (t_b * (1.0 + r.random::<f64>()));
            assert!(hull.margin(&outside) > 0.0);
        }
    }

    #[test]
    fn unit_ball_membership() {
        let ball = ConvexDomain::unit_ball(2);
        assert!(ball.contains(ball.basepoint()));
        assert!(!ball.contains(&ball.from_chart(&v(&[1.0, 0.0]))));
        assert!(!ball.contains(&ball.from_chart(&v(&[2.0, 0.0]))));
        assert!(ball.contains(&ball.from_chart(&v(&[0.999, 0.0]))));
    }

    #[test]
    fn unit_ball_chords() {
        let ball = ConvexDomain::unit_ball(2);
        let c = ball.chord(ball.basepoint(), &v(&[1.0, 0.0])).unwrap();
        assert!((c.a_chart() - v(&[-1.0, 0.0])).amax() < 1e-15);
        assert!((c.b_chart() - v(&[1.0, 0.0])).amax() < 1e-15);
        let x = ball.from_chart(&v(&[0.5, 0.0]));
        let c = ball.chord(&x, &v(&[1.0, 0.0])).unwrap();
        assert!((c.t_a + 1.5).abs() < 1e-12);
        assert!((c.t_b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn p_ball_chord_is_centrally_symmetric() {
        let ball = ConvexDomain::p_norm_ball(4.0, DMatrix::identity(3, 3)).unwrap();
        let dir = v(&[0.6, 0.8]);
        let c = ball.chord(ball.basepoint(), &dir).unwrap();
        assert!((c.t_a + c.t_b).abs() < 1e-12);
        let b = c.b_chart();
        let norm4 = (b[0].powi(4) + b[1].powi(4)).powf(0.25);
        assert!((norm4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_ball_local_exit_matches_global_chord() {
        let frame = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.2, 1.0, 0.0, 0.0, 0.3, 1.5]);
        let ball = ConvexDomain::p_norm_ball(3.0, frame).unwrap();
        let x = ball.basepoint_chart();
        let u = v(&[0.6, -0.8]);
        let (_, t_b) = ball.chord_params(&x, &u).unwrap();
        let xi = &x + &u * t_b;
        let delta = -&u * 1e-3;
        let s = ball.exit_near_boundary(&xi, &delta, &u);
        assert!((s - 1e-3).abs() < 1e-12, "{s}");
    }

    #[test]
    fn ellipsoid_rejects_wrong_signature() {
        assert!(ConvexDomain::ellipsoid(DMatrix::identity(3, 3)).is_err());
        let q = DMatrix::from_diagonal(&v(&[-1.0, -1.0, 1.0]));
        assert!(ConvexDomain::ellipsoid(q).is_err());
    }

    #[test]
    fn transformed_ellipsoid_chords_follow_the_map() {
        let ball = ConvexDomain::unit_ball(2);
        let g = ProjectiveMap::from_rows(&[
            vec![1.3, 0.2, 0.1],
            vec![0.4, 1.0, 0.0],
            vec![0.0, 0.3, 0.8],
        ])
        .unwrap();
        let image = ball.transformed(&g).unwrap();
        let x = ball.from_chart(&v(&[0.2, -0.3]));
        let dir = v(&[0.3, 1.0]);
        let chord = ball.chord(&x, &dir).unwrap();
        let gx = g.apply(&x);
        let gdir = crate::projective::chart_differential(
            &g,
            ball.chart(),
            image.chart(),
            &ball.to_chart(&x).unwrap(),
            &dir,
        )
        .unwrap();
        let image_chord = image.chord(&gx, &gdir).unwrap();
        assert!(image_chord.a.approx_eq(&g.apply(&chord.a), 1e-9));
        assert!(image_chord.b.approx_eq(&g.apply(&chord.b), 1e-9));
    }

    #[test]
    fn validate_accepts_model_domains() {
        ConvexDomain::unit_ball(3).validate(64, 1).unwrap();
        ConvexDomain::p_norm_ball(4.0, DMatrix::identity(3, 3))
            .unwrap()
            .validate(64, 2)
            .unwrap();
    }

    #[test]
    fn descriptor_round_trip() {
        let d: DomainDescriptor =
            serde_json::from_str(r#"{"kind":"pball","p":4.0,"frame":[[1,0,0],[0,1,0],[0,0,1]]}"#)
                .unwrap();
        let dom = d.build(None).unwrap();
        assert_eq!(dom.label(), "pball");
        let bad: DomainDescriptor =
            serde_json::from_str(r#"{"kind":"orbit_hull","group":"g","seed":[1,0,0],"depth":3}"#)
                .unwrap();
        assert!(bad.build(None).is_err());
    }
}
