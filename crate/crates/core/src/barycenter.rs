//! Barycenters of boundary measures in the hyperboloid model, the natural map
//! built from them, the straight-line homotopy to a reference map, the
//! halfspace control constant and finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::hyperbolic::{self, busemann_hyperbolic, minkowski, HyperbolicPoint, Isometry};
use crate::measure::{
    pushforward, visual_measure, BoundaryMeasure, Correspondence, PsFamily, PsMetadata,
};
use crate::projective::ProjectivePoint;
use crate::quadrature::TANGENT_NODES;
use crate::volume::TangentIntegrator;

/// Largest allowed step length of one descent iteration.
const STEP_CAP: f64 = 2.0;
/// Newton steps are used while the Hessian's smallest eigenvalue is at least
/// this fraction of the total mass.
const NEWTON_CONDITION: f64 = 1e-3;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarOptions {
    /// Stop once `|grad| ≤ tolerance·‖λ‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for BarOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterResult {
    pub point: HyperbolicPoint,
    /// Gradient norm at the returned point divided by the total mass.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// `𝓑(point, λ)` with the origin as reference point.
    pub functional_value: f64,
}

/// `𝓑(y, λ) = Σ wᵢ B_{o,ξᵢ}(y)`.
pub fn busemann_functional(
    y: &HyperbolicPoint,
    lambda: &BoundaryMeasure,
    o: &HyperbolicPoint,
) -> Result<f64> {
    let xi = lambda.ideal_points()?;
    Ok(lambda
        .atoms()
        .iter()
        .zip(&xi)
        .map(|(a, x)| a.weight * busemann_hyperbolic(o, x, y))
        .sum())
}

/// Directions `uᵢ` of the atoms seen from `y`, expressed at the origin after
/// moving `y` there.
fn local_directions(inverse: &Isometry, xi: &[DVector<f64>]) -> Vec<DVector<f64>> {
    xi.iter()
        .map(|x| {
            let v = inverse.matrix() * x;
            let u = v.rows(1, v.len() - 1).into_owned();
            let len = u.norm();
            u / len
        })
        .collect()
}

/// Change of the functional when moving from the origin to `exp(v)`, in the
/// frame of [`local_directions`]. Written so that atoms nearly aligned with
/// `v` lose no precision.
fn local_increment(v: &DVector<f64>, u: &[DVector<f64>], w: &[f64]) -> f64 {
    let r = v.norm();
    if r == 0.0 {
        return 0.0;
    }
    let dir = v / r;
    let (em, sh) = ((-r).exp(), r.sinh());
    u.iter()
        .zip(w)
        .map(|(ui, wi)| wi * (em + sh * 0.5 * (&dir - ui).norm_squared()).ln())
        .sum()
}

fn origin_exp(n: usize, v: &DVector<f64>) -> HyperbolicPoint {
    let mut t = DVector::zeros(n + 1);
    t.rows_mut(1, n).copy_from(v);
    HyperbolicPoint::origin(n).exp(&t)
}

/// The barycenter with default options, started at the origin.
pub fn bar(lambda: &BoundaryMeasure) -> Result<BarycenterResult> {
    bar_with(lambda, None, &BarOptions::default())
}

/// Minimize `𝓑(·, λ)` by descent along geodesics with Armijo backtracking.
/// The search direction is the Newton direction while the Hessian
/// `‖λ‖I − Σ wᵢuᵢuᵢᵀ` is well conditioned and the negative gradient
/// otherwise; steps are capped in length.
pub fn bar_with(
    lambda: &BoundaryMeasure,
    start: Option<&HyperbolicPoint>,
    options: &BarOptions,
) -> Result<BarycenterResult> {
    let mass = lambda.total_mass();
    if !(mass > 0.0) || lambda.is_empty() {
        return Err(GeometryError::InvalidArgument("measure has no mass".into()));
    }
    let fraction = lambda.max_atom_fraction();
    if fraction >= 0.5 {
        return Err(GeometryError::MassTooConcentrated { fraction });
    }
    let xi = lambda.ideal_points()?;
    let n = xi[0].len() - 1;
    let w: Vec<f64> = lambda.atoms().iter().map(|a| a.weight).collect();
    let mut y = start.cloned().unwrap_or_else(|| HyperbolicPoint::origin(n));
    if y.dim() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: y.dim(),
        });
    }
    let origin = HyperbolicPoint::origin(n);
    for iteration in 0..=options.max_iterations {
        let boost = Isometry::boost_to(&y);
        let u = local_directions(&boost.inverse(), &xi);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::identity(n, n) * mass;
        for (ui, wi) in u.iter().zip(&w) {
            grad -= ui * *wi;
            hess -= ui * ui.transpose() * *wi;
        }
        let gn = grad.norm();
        if gn <= options.tolerance * mass {
            let functional_value = busemann_functional(&y, lambda, &origin)?;
            return Ok(BarycenterResult {
                point: y,
                gradient_norm: gn / mass,
                iterations: iteration,
                functional_value,
            });
        }
        if iteration == options.max_iterations {
            return Err(GeometryError::NoConvergence {
                gradient_norm: gn / mass,
            });
        }
        let eig = hess.clone().symmetric_eigen();
        let lo = eig.eigenvalues.min();
        let mut dir = if lo > NEWTON_CONDITION * mass {
            -(eig.eigenvectors.clone()
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
                * eig.eigenvectors.transpose()
                * &grad)
        } else {
            -&grad / mass
        };
        if dir.norm() > STEP_CAP {
            dir *= STEP_CAP / dir.norm();
        }
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            if local_increment(&(&dir * t), &u, &w) <= ARMIJO * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Round-off floor: no representable decrease left.
            let functional_value = busemann_functional(&y, lambda, &origin)?;
            if gn <= 1e3 * options.tolerance * mass {
                return Ok(BarycenterResult {
                    point: y,
                    gradient_norm: gn / mass,
                    iterations: iteration,
                    functional_value,
                });
            }
            return Err(GeometryError::NoConvergence {
                gradient_norm: gn / mass,
            });
        }
        y = boost.apply(&origin_exp(n, &(dir * t)));
    }
    unreachable!("loop returns on its last iteration")
}

/// Pushed-forward approximant and its barycenter at one point.
#[derive(Debug, Clone)]
pub struct NaturalMapValue {
    pub point: HyperbolicPoint,
    pub barycenter: BarycenterResult,
    pub metadata: Option<PsMetadata>,
    pub atoms: usize,
}

/// `x ↦ bar(f_*μ_x)` for a precomputed approximant family.
#[derive(Debug, Clone, Copy)]
pub struct NaturalMap<'a> {
    pub family: &'a PsFamily,
    pub correspondence: &'a Correspondence,
    pub options: BarOptions,
}

impl<'a> NaturalMap<'a> {
    pub fn new(family: &'a PsFamily, correspondence: &'a Correspondence) -> Self {
        Self {
            family,
            correspondence,
            options: BarOptions::default(),
        }
    }

    pub fn pushed_measure(&self, x: &ProjectivePoint) -> Result<BoundaryMeasure> {
        pushforward(self.correspondence, &self.family.measure_at(x)?)
    }

    pub fn eval(&self, x: &ProjectivePoint) -> Result<NaturalMapValue> {
        self.eval_from(x, None)
    }

    pub fn eval_from(
        &self,
        x: &ProjectivePoint,
        start: Option<&HyperbolicPoint>,
    ) -> Result<NaturalMapValue> {
        let lambda = self.pushed_measure(x)?;
        let barycenter = bar_with(&lambda, start, &self.options)?;
        Ok(NaturalMapValue {
            point: barycenter.point.clone(),
            barycenter,
            metadata: lambda.metadata,
            atoms: lambda.len(),
        })
    }

    pub fn eval_chart(
        &self,
        x: &DVector<f64>,
        start: Option<&HyperbolicPoint>,
    ) -> Result<HyperbolicPoint> {
        Ok(self
            .eval_from(&self.family.domain().from_chart(x), start)?
            .point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopySample {
    pub t: f64,
    /// Klein chart coordinates of `Ψ_t(x)`.
    pub chart: Vec<f64>,
    /// `−B_{o,ξ}(Ψ_t)` for the tracked cusp; larger is deeper.
    pub busemann_depth: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyTrack {
    pub samples: Vec<HomotopySample>,
    pub max_depth: Option<f64>,
    /// Largest `d(Ψ_s, Ψ_t)/|s − t|` over neighbouring grid points.
    pub continuity: f64,
}

/// Cusp direction whose Busemann depth is reported along a track.
#[derive(Debug, Clone)]
pub struct DepthProbe {
    pub reference: HyperbolicPoint,
    pub cusp: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct HomotopyOptions {
    pub visual_atoms: usize,
    pub seed: u64,
    pub bar: BarOptions,
    pub probe: Option<DepthProbe>,
}

/// `Ψ_t(x) = bar(t·f_*μ_x + (1 − t)·ν_{f(x)})` on a grid of `t`. The mixture
/// drops the term with zero coefficient, so `t = 1` is exactly the natural
/// map's measure and `t = 0` the visual measure at `f(x)`.
pub fn homotopy_track(
    pushed: &BoundaryMeasure,
    fx: &HyperbolicPoint,
    t_grid: &[f64],
    options: &HomotopyOptions,
) -> Result<(HomotopyTrack, Vec<HyperbolicPoint>)> {
    if let Some(t) = t_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(GeometryError::InvalidArgument(format!(
            "t = {t} outside [0, 1]"
        )));
    }
    let nu = visual_measure(fx, options.visual_atoms, options.seed)?;
    let points = t_grid
        .par_iter()
        .map(|&t| {
            let mix = BoundaryMeasure::mixture(t, pushed, 1.0 - t, &nu)?;
            bar_with(&mix, None, &options.bar)
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<HomotopySample> = t_grid
        .iter()
        .zip(&points)
        .map(|(&t, r)| HomotopySample {
            t,
            chart: r.point.to_klein().iter().copied().collect(),
            busemann_depth: options
                .probe
                .as_ref()
                .map(|p| -busemann_hyperbolic(&p.reference, &p.cusp, &r.point)),
            iterations: r.iterations,
        })
        .collect();
    let continuity = points
        .windows(2)
        .zip(t_grid.windows(2))
        .filter(|(_, t)| t[1] != t[0])
        .map(|(p, t)| hyperbolic::distance(&p[0].point, &p[1].point) / (t[1] - t[0]).abs())
        .fold(0.0, f64::max);
    let max_depth = samples
        .iter()
        .filter_map(|s| s.busemann_depth)
        .reduce(f64::max);
    Ok((
        HomotopyTrack {
            samples,
            max_depth,
            continuity,
        },
        points.into_iter().map(|r| r.point).collect(),
    ))
}

/// Smallest cosine between the perpendicular direction from `y` to `h` and
/// the directions from `y` to points of the cap, found on the cap's rim.
pub fn min_cap_cosine(h: &crate::measure::HalfspaceAtInfinity, y: &HyperbolicPoint) -> f64 {
    let n = y.dim();
    let toward = h.direction_from(y);
    // Rim point in the plane spanned by the perpendicular and a fixed
    // orthogonal direction, by bisection on the angle from the perpendicular.
    let boost = Isometry::boost_to(y);
    let local = boost.inverse().matrix() * &toward;
    let e = local.rows(1, n).into_owned().normalize();
    let mut f = DVector::zeros(n);
    let k = (0..n)
        .min_by(|&i, &j| e[i].abs().total_cmp(&e[j].abs()))
        .unwrap_or(0);
    f[k] = 1.0;
    let f = (&f - &e * e.dot(&f)).normalize();
    let ideal = |phi: f64| {
        let u = &e * phi.cos() + &f * phi.sin();
        let mut xi = DVector::zeros(n + 1);
        xi[0] = 1.0;
        xi.rows_mut(1, n).copy_from(&u);
        boost.apply_ideal(&xi)
    };
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    if !h.contains_ideal(&ideal(lo)) {
        return f64::NAN;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h.contains_ideal(&ideal(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    minkowski(&y.direction_to(&ideal(lo)), &toward)
}

/// Distance `D` beyond which every cap direction makes an angle below 60°
/// with the perpendicular: points farther than `D` from a halfspace see all
/// of its cap within cosine ½. Found by bisection on the distance.
pub fn halfspace_control_d(n: usize) -> Result<f64> {
    if !(2..=3).contains(&n) {
        return Err(GeometryError::Unsupported(format!(
            "halfspace control in dimension {n}"
        )));
    }
    let o = HyperbolicPoint::origin(n);
    let mut axis = DVector::zeros(n + 1);
    axis[0] = 1.0;
    axis[1] = 1.0;
    let cosine_at = |d: f64| -> Result<f64> {
        let h = crate::measure::HalfspaceAtInfinity::facing(&o, &axis, d)?;
        Ok(min_cap_cosine(&h, &o))
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cosine_at(mid)? > 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub chart: Vec<f64>,
    pub image_chart: Vec<f64>,
    pub step: f64,
    /// Richardson-extrapolated Jacobian.
    pub jacobian: f64,
    pub jacobian_coarse: f64,
    pub jacobian_fine: f64,
    /// Propagated numerical error of `jacobian`.
    pub error: f64,
    pub hilbert_density: f64,
    pub hyperbolic_density: f64,
    pub bound: f64,
    pub bound_ratio: f64,
    pub violation: bool,
}

fn differential(
    phi: &NaturalMap,
    x: &DVector<f64>,
    center: &HyperbolicPoint,
    h: f64,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = h;
        let plus = phi.eval_chart(&(x + &e), Some(center))?.to_klein();
        let minus = phi.eval_chart(&(x - &e), Some(center))?.to_klein();
        d.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(d)
}

/// Volume Jacobian of the natural map at chart point `x` relative to Hilbert
/// volume on the source and hyperbolic volume on the target, compared with
/// `(h_source/h_target)ⁿ·N`.
pub fn jacobian_check(
    phi: &NaturalMap,
    x: &DVector<f64>,
    h_source: f64,
    h_target: f64,
    n_bound: f64,
    step: f64,
) -> Result<JacobianReport> {
    let domain = phi.family.domain();
    let n = domain.dim();
    if !domain.contains_chart(x) {
        return Err(GeometryError::PointOutsideDomain);
    }
    let center = phi.eval_chart(x, None)?;
    let coarse = differential(phi, x, &center, step)?;
    let fine = differential(phi, x, &center, 0.5 * step)?;
    let (jc, jf) = (coarse.determinant().abs(), fine.determinant().abs());
    let relative = (jc - jf).abs() / jf.max(f64::MIN_POSITIVE);
    if relative > 0.2 {
        return Err(GeometryError::StepTooLarge { relative });
    }
    let richardson = (fine * 4.0 - coarse) / 3.0;
    let klein = center.to_klein();
    let hyperbolic_density = (1.0 - klein.norm_squared()).powf(-0.5 * (n as f64 + 1.0));
    let hilbert_density =
        TangentIntegrator::new(n, TANGENT_NODES, true)?.density_chart(domain, x)?;
    let scale = hyperbolic_density / hilbert_density;
    let jacobian = richardson.determinant().abs() * scale;
    let error = ((jf - jc).abs() * scale).max(1e-3 * jacobian);
    let bound = (h_source / h_target).powi(n as i32) * n_bound;
    Ok(JacobianReport {
        chart: x.iter().copied().collect(),
        image_chart: klein.iter().copied().collect(),
        step,
        jacobian,
        jacobian_coarse: jc * scale,
        jacobian_fine: jf * scale,
        error,
        hilbert_density,
        hyperbolic_density,
        bound,
        bound_ratio: jacobian / bound,
        violation: jacobian > bound + error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, MeasureTag};
    use crate::rng;
    use rand::Rng;

    fn atoms_at(points: &[(f64, f64)], weights: &[f64]) -> BoundaryMeasure {
        let atoms = points
            .iter()
            .zip(weights)
            .map(|(&(a, b), &w)| Atom {
                point: ProjectivePoint::from_slice(&[1.0, a, b]).unwrap(),
                weight: w,
                label: None,
            })
            .collect();
        BoundaryMeasure::new(atoms, MeasureTag::Mixture).unwrap()
    }

    #[test]
    fn roots_of_unity_balance_at_origin() {
        let pts: Vec<(f64, f64)> = (0..3)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                (a.cos(), a.sin())
            })
            .collect();
        let start = HyperbolicPoint::from_klein(&DVector::from_vec(vec![0.6, -0.3])).unwrap();
        let r = bar_with(
            &atoms_at(&pts, &[1.0; 3]),
            Some(&start),
            &BarOptions::default(),
        )
        .unwrap();
        assert!(r.point.to_klein().norm() < 1e-8);
    }

    #[test]
    fn concentrated_mass_is_rejected() {
        let m = atoms_at(&[(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0)], &[2.0, 1.0, 1.0]);
        assert_eq!(
            bar(&m).unwrap_err(),
            GeometryError::MassTooConcentrated { fraction: 0.5 }
        );
    }

    #[test]
    fn barycenter_is_equivariant_and_scale_free() {
        let mut r = rng::stream(3, 0);
        for _ in 0..20 {
            let k = r.random_range(3..9);
            let pts: Vec<(f64, f64)> = (0..k)
                .map(|_| {
                    let a: f64 = r.random_range(0.0..std::f64::consts::TAU);
                    (a.cos(), a.sin())
                })
                .collect();
            let w: Vec<f64> = (0..k).map(|_| r.random_range(1.0..2.0)).collect();
            let m = atoms_at(&pts, &w);
            if m.max_atom_fraction() >= 0.45 {
                continue;
            }
            let b = bar(&m).unwrap();
            let g = Isometry::random(&mut r, 2, 2.0);
            let moved = bar(&m.transformed(&g.to_projective()).unwrap()).unwrap();
            assert!(hyperbolic::distance(&moved.point, &g.apply(&b.point)) < 1e-7);
            let scaled = bar(&m.scaled(7.5).unwrap()).unwrap();
            assert!(hyperbolic::distance(&scaled.point, &b.point) < 1e-9);
            let far = HyperbolicPoint::from_klein(&DVector::from_vec(vec![-0.9, 0.3])).unwrap();
            let other = bar_with(&m, Some(&far), &BarOptions::default()).unwrap();
            assert!(hyperbolic::distance(&other.point, &b.point) < 1e-6);
        }
    }

    #[test]
    fn control_constant_is_the_sixty_degree_distance() {
        for n in [2, 3] {
            let d = halfspace_control_d(n).unwrap();
            assert!((d - 0.5f64.atanh()).abs() < 1e-10, "{d}");
        }
    }

    #[test]
    fn local_increment_matches_busemann_difference() {
        let mut r = rng::stream(9, 0);
        let y = HyperbolicPoint::from_klein(&DVector::from_vec(vec![0.3, 0.5])).unwrap();
        let boost = Isometry::boost_to(&y);
        let xi: Vec<DVector<f64>> = (0..5)
            .map(|_| {
                let u = rng::unit_vector(&mut r, 2);
                DVector::from_vec(vec![1.0, u[0], u[1]])
            })
            .collect();
        let w = vec![1.0, 0.5, 2.0, 1.5, 0.7];
        let u = local_directions(&boost.inverse(), &xi);
        let v = DVector::from_vec(vec![0.4, -0.2]);
        let moved = boost.apply(&origin_exp(2, &v));
        let direct: f64 = xi
            .iter()
            .zip(&w)
            .map(|(x, wi)| wi * busemann_hyperbolic(&y, x, &moved))
            .sum();
        assert!((local_increment(&v, &u, &w) - direct).abs() < 1e-12);
    }
}
