//! Busemann–Hausdorff volume: the density against chart Lebesgue measure,
//! Monte-Carlo metric-ball volumes and two volume-growth entropy estimators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::group::{self, ProjectiveGroup};
use crate::metric;
use crate::projective::ProjectivePoint;
use crate::quadrature::{sphere_area, unit_ball_volume, SphereRule, TANGENT_NODES};
use crate::rng;
use crate::tolerances::TOLERANCES;

/// Unit Finsler ball at a point, integrated in a frame where it is nearly round.
#[derive(Debug, Clone)]
pub struct TangentBall {
    /// Lebesgue volume of `{v : F(x, v) ≤ 1}`.
    pub lebesgue: f64,
    /// `∫_{B_F} v vᵀ dv`.
    pub second_moment: DMatrix<f64>,
    /// Linear map taking the ball to a nearly round body.
    pub frame: DMatrix<f64>,
    /// Rounding passes beyond the initial quadratic fit.
    pub refinements: usize,
}

/// Sphere rules used to integrate over tangent directions.
#[derive(Debug, Clone)]
pub struct TangentIntegrator {
    dim: usize,
    fine: SphereRule,
    check: Option<SphereRule>,
    coarse: SphereRule,
    fit: SphereRule,
}

const ROUNDING_PASSES: usize = 40;
const ROUNDNESS: f64 = 1e-3;

fn sym_sqrt(m: &DMatrix<f64>, power: f64) -> Option<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig
        .eigenvalues
        .iter()
        .any(|&l| !(l > 0.0) || !l.is_finite())
    {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

impl TangentIntegrator {
    /// `nodes` sets the fine rule; with `check` the result is compared against a
    /// rule with a quarter of the nodes.
    pub fn new(dim: usize, nodes: usize, check: bool) -> Result<Self> {
        Ok(Self {
            dim,
            fine: SphereRule::new(dim, nodes)?,
            check: if check {
                Some(SphereRule::new(dim, nodes / 4)?)
            } else {
                None
            },
            coarse: SphereRule::new(dim, 128)?,
            fit: SphereRule::new(dim, 24)?,
        })
    }

    pub fn nodes(&self) -> usize {
        self.fine.len()
    }

    /// Least-squares quadratic form matching `F²` on a few directions.
    fn fitted_frame(&self, norm: &impl Fn(&DVector<f64>) -> Result<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let rows = self.fit.len();
        let mut a = DMatrix::zeros(rows, pairs.len());
        let mut b = DVector::zeros(rows);
        for (k, u) in self.fit.nodes.iter().enumerate() {
            for (c, &(i, j)) in pairs.iter().enumerate() {
                a[(k, c)] = if i == j {
                    u[i] * u[i]
                } else {
                    2.0 * u[i] * u[j]
                };
            }
            b[k] = norm(u)?.powi(2);
        }
        let g = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|_| GeometryError::QuadratureUnconverged { relative: f64::NAN })?;
        let mut form = DMatrix::zeros(n, n);
        for (c, &(i, j)) in pairs.iter().enumerate() {
            form[(i, j)] = g[c];
            form[(j, i)] = g[c];
        }
        Ok(sym_sqrt(&form, 0.5).unwrap_or_else(|| DMatrix::identity(n, n) * b.mean().sqrt()))
    }

    /// `(Leb, second moment)` of the body `frame·B_F`, computed in the round frame.
    fn moments(
        &self,
        rule: &SphereRule,
        frame_inv: &DMatrix<f64>,
        norm: &impl Fn(&DVector<f64>) -> Result<f64>,
    ) -> Result<(f64, DMatrix<f64>)> {
        let n = self.dim;
        let mut leb = 0.0;
        let mut m2 = DMatrix::zeros(n, n);
        for (w, weight) in rule.nodes.iter().zip(&rule.weights) {
            let f = norm(&(frame_inv * w))?;
            let r = f.recip();
            leb += weight * r.powi(n as i32);
            m2 += w * w.transpose() * (weight * r.powi(n as i32 + 2));
        }
        Ok((leb / n as f64, m2 / (n + 2) as f64))
    }

    /// Integrate the unit ball of an arbitrary norm on ℝⁿ.
    pub fn ball_of(&self, norm: impl Fn(&DVector<f64>) -> Result<f64>) -> Result<TangentBall> {
        let n = self.dim;
        let mut frame = self.fitted_frame(&norm)?;
        let mut refinements = 0;
        for _ in 0..ROUNDING_PASSES {
            let inv = frame
                .clone()
                .try_inverse()
                .ok_or(GeometryError::QuadratureUnconverged {
                    relative: f64::INFINITY,
                })?;
            let (_, m2) = self.moments(&self.coarse, &inv, &norm)?;
            let eig = m2.clone().symmetric_eigen();
            let (lo, hi) = eig
                .eigenvalues
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| {
                    (lo.min(l), hi.max(l))
                });
            if hi / lo < 1.0 + ROUNDNESS {
                break;
            }
            let scale = m2.trace() / n as f64;
            let step =
                sym_sqrt(&(m2 / scale), -0.5).ok_or(GeometryError::QuadratureUnconverged {
                    relative: f64::INFINITY,
                })?;
            frame = step * frame;
            refinements += 1;
        }
        let inv = frame
            .clone()
            .try_inverse()
            .ok_or(GeometryError::QuadratureUnconverged {
                relative: f64::INFINITY,
            })?;
        let det = frame.determinant().abs();
        let (leb, m2) = self.moments(&self.fine, &inv, &norm)?;
        if let Some(check) = &self.check {
            let (leb_check, _) = self.moments(check, &inv, &norm)?;
            let relative = (leb - leb_check).abs() / leb;
            if relative > TOLERANCES.quadrature_relative {
                return Err(GeometryError::QuadratureUnconverged { relative });
            }
        }
        Ok(TangentBall {
            lebesgue: leb / det,
            second_moment: &inv * m2 * inv.transpose() / det,
            frame,
            refinements,
        })
    }

    /// Unit Finsler ball of the Hilbert metric at chart point `x`.
    pub fn tangent_ball(&self, domain: &ConvexDomain, x: &DVector<f64>) -> Result<TangentBall> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !domain.contains_chart(x) {
            return Err(GeometryError::PointOutsideDomain);
        }
        self.ball_of(|u| metric::finsler_norm_chart(domain, x, u))
    }

    /// Busemann–Hausdorff density at chart point `x`.
    pub fn density_chart(&self, domain: &ConvexDomain, x: &DVector<f64>) -> Result<f64> {
        Ok(unit_ball_volume(self.dim) / self.tangent_ball(domain, x)?.lebesgue)
    }
}

/// Density of Hilbert volume against Lebesgue measure of the chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeDensity {
    pub value: f64,
    /// Lebesgue volume of the unit Finsler ball.
    pub unit_ball: f64,
    pub nodes: usize,
}

/// `ω_n / Leb(B_F(1, x))` with at least 4096 direction nodes, checked against
/// a quarter-size rule.
pub fn volume_density(domain: &ConvexDomain, x: &ProjectivePoint) -> Result<VolumeDensity> {
    let xc = domain
        .to_chart(x)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    let integrator = TangentIntegrator::new(domain.dim(), TANGENT_NODES, true)?;
    let ball = integrator.tangent_ball(domain, &xc)?;
    Ok(VolumeDensity {
        value: unit_ball_volume(domain.dim()) / ball.lebesgue,
        unit_ball: ball.lebesgue,
        nodes: integrator.nodes(),
    })
}

/// Sampling knobs for [`ball_volume_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeOptions {
    pub shards: usize,
    /// Samples per shard per round.
    pub batch: usize,
    pub min_samples: usize,
    pub max_samples: usize,
    /// Direction nodes of the density quadrature at each sample.
    pub density_nodes: usize,
    pub relative_error: f64,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        Self {
            shards: 4,
            batch: 64,
            min_samples: 1024,
            max_samples: 1 << 16,
            density_nodes: 512,
            relative_error: TOLERANCES.volume_relative_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallVolume {
    pub radius: f64,
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub shards: usize,
}

impl BallVolume {
    pub fn relative_error(&self) -> f64 {
        self.standard_error / self.estimate
    }
}

/// Relative floor on reported errors; the density itself is only trusted to this.
const RELATIVE_FLOOR: f64 = 1e-4;

/// Draw `s ∈ [0, R]` with density proportional to `sinh^{n−1}(s)`.
fn radial_sample(n: usize, r: f64, u: f64) -> f64 {
    match n {
        2 => 2.0 * (u.sqrt() * (0.5 * r).sinh()).asinh(),
        _ => {
            let g = |s: f64| (2.0 * s).sinh() - 2.0 * s;
            let target = u * g(r);
            let (mut lo, mut hi) = (0.0, r);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

fn radial_density(n: usize, r: f64, s: f64) -> f64 {
    match n {
        2 => s.sinh() / (2.0 * (0.5 * r).sinh().powi(2)),
        _ => 4.0 * s.sinh().powi(2) / ((2.0 * r).sinh() - 2.0 * r),
    }
}

/// Stratified direction `i` of `m`: stratified in the first angle, random in the rest.
fn stratified_direction<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    i: usize,
    m: usize,
) -> DVector<f64> {
    let t = (i as f64 + rng.random::<f64>()) / m as f64;
    match n {
        2 => {
            let th = 2.0 * std::f64::consts::PI * t;
            DVector::from_vec(vec![th.cos(), th.sin()])
        }
        _ => {
            let z = 2.0 * t - 1.0;
            let ph = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let rho = (1.0 - z * z).max(0.0).sqrt();
            DVector::from_vec(vec![rho * ph.cos(), rho * ph.sin(), z])
        }
    }
}

/// Polar volume integrand at chart direction `u` and Hilbert radius `s`,
/// times the area of the direction sphere.
fn polar_sample(
    domain: &ConvexDomain,
    integrator: &TangentIntegrator,
    x: &DVector<f64>,
    u: &DVector<f64>,
    s: f64,
) -> Result<f64> {
    let n = x.len();
    let (t_a, t_b) = domain.chord_params(x, u)?;
    let tau = metric::param_at_distance(t_a, t_b, s);
    let e = (2.0 * s).exp();
    let (a, b) = (t_b, -t_a);
    let dtau = 2.0 * e * a * b * (a + b) / (a + b * e).powi(2);
    let y = x + u * tau;
    let density = integrator.density_chart(domain, &y)?;
    Ok(density * tau.powi(n as i32 - 1) * dtau * sphere_area(n))
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    sum: f64,
    sum_sq: f64,
}

/// Hilbert volume of `{y : d(x, y) ≤ R}` with default options.
pub fn ball_volume(
    domain: &ConvexDomain,
    x: &ProjectivePoint,
    r: f64,
    seed: u64,
) -> Result<BallVolume> {
    ball_volume_with(domain, x, r, seed, &VolumeOptions::default())
}

/// Polar Monte Carlo: directions stratified on the chart sphere, Hilbert
/// radius drawn from the hyperbolic radial law, each sample weighted by the
/// Busemann–Hausdorff density. Deterministic in `(seed, shards)`.
pub fn ball_volume_with(
    domain: &ConvexDomain,
    x: &ProjectivePoint,
    r: f64,
    seed: u64,
    options: &VolumeOptions,
) -> Result<BallVolume> {
    if !(r > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "ball radius {r} must be positive"
        )));
    }
    let shards = options.shards.max(1);
    let batch = options.batch.max(2);
    let n = domain.dim();
    let xc = domain
        .to_chart(x)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    if !domain.contains_chart(&xc) {
        return Err(GeometryError::PointOutsideDomain);
    }
    let integrator = TangentIntegrator::new(n, options.density_nodes, false)?;
    let mut streams: Vec<_> = (0..shards).map(|k| rng::stream(seed, k as u64)).collect();
    let mut totals = vec![Moments::default(); shards];
    loop {
        let rounds: Vec<Result<Moments>> = streams
            .par_iter_mut()
            .map(|stream| {
                let mut perm: Vec<usize> = (0..batch).collect();
                for i in (1..batch).rev() {
                    perm.swap(i, stream.random_range(0..=i));
                }
                let mut m = Moments::default();
                for (i, &j) in perm.iter().enumerate() {
                    let u = stratified_direction(stream, n, i, batch);
                    let v = (j as f64 + stream.random::<f64>()) / batch as f64;
                    let s = radial_sample(n, r, v);
                    let w =
                        polar_sample(domain, &integrator, &xc, &u, s)? / radial_density(n, r, s);
                    m.count += 1;
                    m.sum += w;
                    m.sum_sq += w * w;
                }
                Ok(m)
            })
            .collect();
        for (t, m) in totals.iter_mut().zip(rounds) {
            let m = m?;
            t.count += m.count;
            t.sum += m.sum;
            t.sum_sq += m.sum_sq;
        }
        let all = totals.iter().fold(Moments::default(), |a, m| Moments {
            count: a.count + m.count,
            sum: a.sum + m.sum,
            sum_sq: a.sum_sq + m.sum_sq,
        });
        let count = all.count as f64;
        let mean = all.sum / count;
        let var = ((all.sum_sq / count - mean * mean) * count / (count - 1.0)).max(0.0);
        let se = (var / count).sqrt().max(RELATIVE_FLOOR * mean.abs());
        let relative = se / mean;
        if all.count >= options.min_samples && relative <= options.relative_error {
            return Ok(BallVolume {
                radius: r,
                estimate: mean,
                standard_error: se,
                samples: all.count,
                seed,
                shards,
            });
        }
        if all.count >= options.max_samples {
            return Err(GeometryError::BudgetExceeded {
                relative_error: relative,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    BallGrowth,
    PoincareSeries,
}

impl EntropyMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BallGrowth => "ball_growth",
            Self::PoincareSeries => "poincare_series",
        }
    }
}

/// One measured point behind an entropy estimate: a ball volume or an orbit count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthSample {
    pub radius: f64,
    pub amount: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub window: (f64, f64),
    pub standard_error: f64,
    pub method: EntropyMethod,
    pub profile: Vec<GrowthSample>,
}

/// `(log Vol B(R₂) − log Vol B(R₁)) / (R₂ − R₁)`.
pub fn entropy_ball_growth(
    domain: &ConvexDomain,
    x: &ProjectivePoint,
    r1: f64,
    r2: f64,
    seed: u64,
) -> Result<EntropyEstimate> {
    entropy_ball_growth_with(domain, x, r1, r2, seed, &VolumeOptions::default())
}

pub fn entropy_ball_growth_with(
    domain: &ConvexDomain,
    x: &ProjectivePoint,
    r1: f64,
    r2: f64,
    seed: u64,
    options: &VolumeOptions,
) -> Result<EntropyEstimate> {
    if !(r1 >= 3.0 && r2 > r1) {
        return Err(GeometryError::InvalidArgument(format!(
            "entropy window ({r1}, {r2}) needs R₂ > R₁ ≥ 3"
        )));
    }
    let v1 = ball_volume_with(domain, x, r1, seed, options)?;
    let v2 = ball_volume_with(domain, x, r2, seed, options)?;
    let width = r2 - r1;
    let value = (v2.estimate.ln() - v1.estimate.ln()) / width;
    let se = v1.relative_error().hypot(v2.relative_error()) / width;
    Ok(EntropyEstimate {
        value: value.max(0.0),
        window: (r1, r2),
        standard_error: se,
        method: EntropyMethod::BallGrowth,
        profile: [v1, v2]
            .iter()
            .map(|v| GrowthSample {
                radius: v.radius,
                amount: v.estimate,
                standard_error: v.standard_error,
            })
            .collect(),
    })
}

/// Orbit counts needed before a radius enters the fit window.
pub const MIN_ORBIT_COUNT: usize = 100;

const FIT_GRID: usize = 400;

/// Distances `d(o, γo) ≤ r_max`, sorted.
pub fn orbit_distances(
    domain: &ConvexDomain,
    group: &ProjectiveGroup,
    o: &ProjectivePoint,
    r_max: f64,
) -> Result<Vec<f64>> {
    let mut distances = Vec::new();
    group::for_each_orbit_point(group, domain, o, r_max, false, |visit| {
        if visit.distance <= r_max {
            distances.push(visit.distance);
        }
    })?;
    distances.sort_by(f64::total_cmp);
    Ok(distances)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let se = (rss / (k - 2.0).max(1.0) / sxx).sqrt();
    (slope, se)
}

/// Growth rate of `N(R) = #{γ : d(o, γo) ≤ R}` from sorted distances: the
/// least-squares slope of `log N` over the window where `N > 100`. The error
/// combines the regression error with half the disagreement between the
/// slopes of the two window halves.
pub fn growth_rate(distances: &[f64], r_max: f64) -> Result<EntropyEstimate> {
    if distances.len() <= MIN_ORBIT_COUNT {
        return Err(GeometryError::OrbitTooSmall {
            found: distances.len(),
            needed: MIN_ORBIT_COUNT + 1,
        });
    }
    let r1 = distances[MIN_ORBIT_COUNT];
    if !(r_max > r1) || r1 <= 0.0 {
        return Err(GeometryError::OrbitTooSmall {
            found: distances.len(),
            needed: MIN_ORBIT_COUNT + 1,
        });
    }
    let count = |r: f64| distances.partition_point(|&d| d <= r) as f64;
    let xs: Vec<f64> = (0..FIT_GRID)
        .map(|k| r1 + (r_max - r1) * k as f64 / (FIT_GRID - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&r| count(r).ln()).collect();
    let (slope, se) = least_squares_slope(&xs, &ys);
    let half = FIT_GRID / 2;
    let (lower, _) = least_squares_slope(&xs[..half], &ys[..half]);
    let (upper, _) = least_squares_slope(&xs[half..], &ys[half..]);
    let standard_error = se.hypot(0.5 * (upper - lower)).max(f64::EPSILON);
    let mut profile: Vec<GrowthSample> = (1..)
        .map(|k| k as f64)
        .take_while(|&r| r < r_max)
        .chain(std::iter::once(r_max))
        .map(|r| GrowthSample {
            radius: r,
            amount: count(r),
            standard_error: count(r).sqrt(),
        })
        .collect();
    profile.dedup_by(|a, b| a.radius == b.radius);
    Ok(EntropyEstimate {
        value: slope.max(0.0),
        window: (r1, r_max),
        standard_error,
        method: EntropyMethod::PoincareSeries,
        profile,
    })
}

/// Critical-exponent estimate from orbit counting. Generators are checked to
/// preserve the domain first (sampled, seeded by `seed`).
pub fn entropy_poincare(
    domain: &ConvexDomain,
    group: &ProjectiveGroup,
    o: &ProjectivePoint,
    r_max: f64,
    seed: u64,
) -> Result<EntropyEstimate> {
    group.validate_preserves(domain, 64, 3.0, seed)?;
    let distances = orbit_distances(domain, group, o, r_max)?;
    growth_rate(&distances, r_max)
}

/// Hilbert volume of the Dirichlet domain `{y : d(y, o) ≤ d(y, γo) for all γ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletVolume {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub shards: usize,
    /// Smallest and largest radial extent seen from `o`.
    pub inradius: f64,
    pub circumradius: f64,
    /// Orbit points the domain was cut by.
    pub neighbours: usize,
}

/// Largest `s` such that the point at Hilbert distance `s` from `x` in
/// direction `u` is at least as close to `x` as to every neighbour. The
/// domain is star-shaped along straight rays, so bisection applies. `None`
/// if the ray is still inside at `limit`.
fn dirichlet_radius(
    domain: &ConvexDomain,
    x: &DVector<f64>,
    u: &DVector<f64>,
    neighbours: &[DVector<f64>],
    limit: f64,
) -> Result<Option<f64>> {
    let (t_a, t_b) = domain.chord_params(x, u)?;
    let inside = |s: f64| -> Result<bool> {
        let y = x + u * metric::param_at_distance(t_a, t_b, s);
        for p in neighbours {
            if metric::distance_chart(domain, &y, p)? < s {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if inside(limit)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, limit);
    while hi - lo > 1e-10 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if inside(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Monte Carlo Hilbert volume of the Dirichlet domain centered at `o`:
/// stratified directions, the exact radial extent found by bisection, and a
/// stratified radius along it. The neighbour set grows until every ray
/// leaves the domain before half the neighbour radius, which makes the cut
/// exact for the enumerated group.
pub fn dirichlet_volume(
    domain: &ConvexDomain,
    group: &ProjectiveGroup,
    o: &ProjectivePoint,
    seed: u64,
    options: &VolumeOptions,
) -> Result<DirichletVolume> {
    let n = domain.dim();
    let oc = domain
        .to_chart(o)
        .map_err(|_| GeometryError::PointOutsideDomain)?;
    if !domain.contains_chart(&oc) {
        return Err(GeometryError::PointOutsideDomain);
    }
    let shards = options.shards.max(1);
    let batch = options.batch.max(2);
    let integrator = TangentIntegrator::new(n, options.density_nodes, false)?;
    let mut reach = 2.0;
    'grow: loop {
        // Orbit enumeration grows like e^{h·reach}; a domain still open at
        // distance 2 is taken to be non-compact (a cusp, or no lattice).
        if reach > 4.0 {
            return Err(GeometryError::Unsupported(format!(
                "Dirichlet domain does not close up within distance {}; only cocompact groups are supported",
                0.25 * reach
            )));
        }
        let mut neighbours = Vec::new();
        let chart = domain.chart();
        group::for_each_orbit_point(group, domain, o, reach, false, |visit| {
            if visit.distance <= reach && visit.distance > TOLERANCES.point_identity {
                if let Ok(c) = chart.coords_of_vector(&DVector::from_column_slice(visit.vector)) {
                    neighbours.push(c);
                }
            }
        })?;
        let limit = 0.5 * reach;
        let mut streams: Vec<_> = (0..shards).map(|k| rng::stream(seed, k as u64)).collect();
        let mut totals = vec![Moments::default(); shards];
        let (mut inradius, mut circumradius) = (f64::INFINITY, 0.0f64);
        loop {
            let rounds: Vec<Result<Option<(Moments, f64, f64)>>> = streams
                .par_iter_mut()
                .map(|stream| {
                    let mut perm: Vec<usize> = (0..batch).collect();
                    for i in (1..batch).rev() {
                        perm.swap(i, stream.random_range(0..=i));
                    }
                    let mut m = Moments::default();
                    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                    for (i, &j) in perm.iter().enumerate() {
                        let u = stratified_direction(stream, n, i, batch);
                        let Some(rho) = dirichlet_radius(domain, &oc, &u, &neighbours, limit)?
                        else {
                            return Ok(None);
                        };
                        lo = lo.min(rho);
                        hi = hi.max(rho);
                        let s = rho * (j as f64 + stream.random::<f64>()) / batch as f64;
                        let w = polar_sample(domain, &integrator, &oc, &u, s)? * rho;
                        m.count += 1;
                        m.sum += w;
                        m.sum_sq += w * w;
                    }
                    Ok(Some((m, lo, hi)))
                })
                .collect();
            for (t, round) in totals.iter_mut().zip(rounds) {
                let Some((m, lo, hi)) = round? else {
                    reach *= 2.0;
                    continue 'grow;
                };
                t.count += m.count;
                t.sum += m.sum;
                t.sum_sq += m.sum_sq;
                inradius = inradius.min(lo);
                circumradius = circumradius.max(hi);
            }
            let all = totals.iter().fold(Moments::default(), |a, m| Moments {
                count: a.count + m.count,
                sum: a.sum + m.sum,
                sum_sq: a.sum_sq + m.sum_sq,
            });
            let count = all.count as f64;
            let mean = all.sum / count;
            let var = ((all.sum_sq / count - mean * mean) * count / (count - 1.0)).max(0.0);
            let se = (var / count).sqrt().max(RELATIVE_FLOOR * mean.abs());
            let relative = se / mean;
            if all.count >= options.min_samples && relative <= options.relative_error {
                return Ok(DirichletVolume {
                    estimate: mean,
                    standard_error: se,
                    samples: all.count,
                    seed,
                    shards,
                    inradius,
                    circumradius,
                    neighbours: neighbours.len(),
                });
            }
            if all.count >= options.max_samples {
                return Err(GeometryError::BudgetExceeded {
                    relative_error: relative,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn klein_density(n: usize, r2: f64) -> f64 {
        (1.0 - r2).powf(-0.5 * (n as f64 + 1.0))
    }

    #[test]
    fn density_matches_klein_model() {
        for n in [2, 3] {
            let d = ConvexDomain::unit_ball(n);
            for rho in [0.0, 0.5, 0.9, 1.0 - 1e-6, 1.0 - 1e-9] {
                let mut c = DVector::zeros(n);
                c[0] = rho;
                let got = volume_density(&d, &d.from_chart(&c)).unwrap().value;
                let want = klein_density(n, rho * rho);
                assert!(
                    (got / want - 1.0).abs() < 1e-6,
                    "n={n} ρ={rho}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn density_at_the_center_of_a_p_ball() {
        // The tangent unit ball at the center is the 4-ball itself, of area
        // 4Γ(5/4)²/Γ(3/2).
        let d = ConvexDomain::p_norm_ball(4.0, DMatrix::identity(3, 3)).unwrap();
        let v = volume_density(&d, d.basepoint()).unwrap();
        let gamma_5_4 = 0.906_402_477_055_477_f64;
        let area = 4.0 * gamma_5_4 * gamma_5_4 / (0.5 * PI.sqrt());
        assert!((v.unit_ball / area - 1.0).abs() < 1e-6, "{v:?} vs {area}");
    }

    #[test]
    fn radial_law_inverts() {
        for n in [2, 3] {
            let r = 4.0;
            let h = 1e-6;
            for u in [0.1, 0.5, 0.9] {
                let s = radial_sample(n, r, u);
                let ds = radial_sample(n, r, u + h) - radial_sample(n, r, u - h);
                let pdf = 2.0 * h / ds;
                assert!(
                    (pdf / radial_density(n, r, s) - 1.0).abs() < 1e-4,
                    "n={n} u={u}"
                );
            }
        }
    }

    #[test]
    fn hyperbolic_disc_area() {
        let d = ConvexDomain::unit_ball(2);
        let v = ball_volume(&d, d.basepoint(), 1.0, 7).unwrap();
        let want = 2.0 * PI * (1.0f64.cosh() - 1.0);
        assert!((v.estimate / want - 1.0).abs() < 0.02, "{v:?}");
        assert!(v.standard_error > 0.0);
    }

    #[test]
    fn slope_fit_recovers_exponential_counts() {
        let distances: Vec<f64> = (1..20_000).map(|k| (k as f64).ln()).collect();
        let e = growth_rate(&distances, (20_000f64).ln() - 0.01).unwrap();
        assert!((e.value - 1.0).abs() < 0.01, "{e:?}");
        assert!(growth_rate(&distances[..50], 10.0).is_err());
    }

    #[test]
    fn dirichlet_domain_of_a_reflection_group_is_its_chamber() {
        let ex = crate::group::builtin::triangle_lattice(4, 4, 4).unwrap();
        let v = dirichlet_volume(
            &ex.domain,
            &ex.group,
            ex.domain.basepoint(),
            3,
            &VolumeOptions::default(),
        )
        .unwrap();
        let area = std::f64::consts::PI / 4.0;
        assert!(
            (v.estimate - area).abs() < 3.0 * v.standard_error + 1e-3,
            "{v:?}"
        );
    }
}
