//! Eccentricity of the Hilbert Finsler norm against the moment metric of its
//! unit ball: `N = max_{|v|_g = 1} F(v)ⁿ · Vol_g(B_F) / Vol_g(B_g)`.
//!
//! The comparison metric at a point is `g = Leb(B_F)/(n+2) · M⁻¹` with `M`
//! the second moment of the unit ball `B_F`. For an ellipsoidal ball
//! `{vᵀAv ≤ 1}` this gives back `A`, and it transforms naturally under
//! linear maps of the tangent space.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::metric;
use crate::quadrature::{unit_ball_volume, SphereRule, TANGENT_NODES};
use crate::volume::TangentIntegrator;

/// Directions used to locate the extremes of `F` on the `g`-sphere before
/// local refinement.
const SEARCH_NODES: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EccentricitySample {
    pub chart: Vec<f64>,
    pub n_value: f64,
    /// `max(max_{S_g} F, max_{S_F} |·|_g)`.
    pub k_value: f64,
    pub max_on_metric_sphere: f64,
    pub min_on_metric_sphere: f64,
    /// `K^{−2n} ≤ N ≤ K^{2n}`.
    pub sandwich: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EccentricityReport {
    pub samples: Vec<EccentricitySample>,
    pub max_n: f64,
    pub min_n: f64,
    pub max_k: f64,
}

/// Symmetric inverse square root.
fn inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(-0.5)));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Orthonormal basis of the tangent plane of the unit sphere at `z`.
fn tangent_basis(z: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = z.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let mut v = &e - z * z.dot(&e);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        if v.norm() > 1e-6 {
            basis.push(v.normalize());
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    basis
}

/// Maximize `f` on the unit sphere starting at `z` by compass search.
fn compass_max(
    f: &impl Fn(&DVector<f64>) -> Result<f64>,
    z: DVector<f64>,
    step: f64,
) -> Result<f64> {
    let mut best_z = z;
    let mut best = f(&best_z)?;
    let mut step = step;
    while step > 1e-10 {
        let mut moved = false;
        for b in tangent_basis(&best_z) {
            for sign in [1.0, -1.0] {
                let cand = (&best_z + &b * (sign * step)).normalize();
                let value = f(&cand)?;
                if value > best {
                    best = value;
                    best_z = cand;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(best)
}

fn extremes(f: &impl Fn(&DVector<f64>) -> Result<f64>, rule: &SphereRule) -> Result<(f64, f64)> {
    let values = rule.nodes.iter().map(f).collect::<Result<Vec<_>>>()?;
    let arg = |better: fn(f64, f64) -> bool| {
        (0..values.len())
            .reduce(|a, b| if better(values[b], values[a]) { b } else { a })
            .unwrap_or(0)
    };
    let (hi, lo) = (arg(|a, b| a > b), arg(|a, b| a < b));
    let step = 2.0 * (4.0 * std::f64::consts::PI / rule.len() as f64).sqrt();
    let max = compass_max(f, rule.nodes[hi].clone(), step)?;
    let min = -compass_max(&|z: &DVector<f64>| Ok(-f(z)?), rule.nodes[lo].clone(), step)?;
    Ok((max, min))
}

/// Eccentricity of an arbitrary norm on ℝⁿ, `chart` being recorded as given.
pub fn eccentricity_of_norm(
    n: usize,
    chart: &DVector<f64>,
    norm: impl Fn(&DVector<f64>) -> Result<f64>,
) -> Result<EccentricitySample> {
    let integrator = TangentIntegrator::new(n, TANGENT_NODES, true)?;
    let ball = integrator.ball_of(&norm)?;
    let m_inv =
        ball.second_moment
            .clone()
            .try_inverse()
            .ok_or(GeometryError::QuadratureUnconverged {
                relative: f64::INFINITY,
            })?;
    let g = m_inv * (ball.lebesgue / (n as f64 + 2.0));
    let to_metric_sphere = inv_sqrt(&g).ok_or(GeometryError::QuadratureUnconverged {
        relative: f64::INFINITY,
    })?;
    let f = |z: &DVector<f64>| norm(&(&to_metric_sphere * z));
    let (max, min) = extremes(&f, &SphereRule::new(n, SEARCH_NODES)?)?;
    let n_value = max.powi(n as i32) * ball.lebesgue * g.determinant().sqrt() / unit_ball_volume(n);
    let k_value = max.max(1.0 / min);
    let k2n = k_value.powi(2 * n as i32);
    Ok(EccentricitySample {
        chart: chart.iter().copied().collect(),
        n_value,
        k_value,
        max_on_metric_sphere: max,
        min_on_metric_sphere: min,
        sandwich: n_value <= k2n * (1.0 + 1e-12) && n_value * k2n >= 1.0 - 1e-12,
    })
}

/// Eccentricity of the Hilbert Finsler norm at one chart point.
pub fn eccentricity_at(domain: &ConvexDomain, x: &DVector<f64>) -> Result<EccentricitySample> {
    if x.len() != domain.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: domain.dim(),
            got: x.len(),
        });
    }
    if !domain.contains_chart(x) {
        return Err(GeometryError::PointOutsideDomain);
    }
    eccentricity_of_norm(domain.dim(), x, |v| {
        metric::finsler_norm_chart(domain, x, v)
    })
}

/// Eccentricity at each sample point, computed in parallel.
pub fn eccentricity(domain: &ConvexDomain, points: &[DVector<f64>]) -> Result<EccentricityReport> {
    if points.is_empty() {
        return Err(GeometryError::InvalidArgument("no sample points".into()));
    }
    let samples = points
        .par_iter()
        .map(|x| eccentricity_at(domain, x))
        .collect::<Result<Vec<_>>>()?;
    let fold = |init: f64, pick: fn(f64, f64) -> f64, field: fn(&EccentricitySample) -> f64| {
        samples.iter().map(field).fold(init, pick)
    };
    Ok(EccentricityReport {
        max_n: fold(f64::NEG_INFINITY, f64::max, |s| s.n_value),
        min_n: fold(f64::INFINITY, f64::min, |s| s.n_value),
        max_k: fold(f64::NEG_INFINITY, f64::max, |s| s.k_value),
        samples,
    })
}
