//! Numeric tolerances shared across the crate, collected in one record.

use serde::Serialize;

/// Every threshold the numerical routines compare against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Canonical projective points are equal when their coordinates agree to this.
    pub point_identity: f64,
    /// Ratio of third to first singular value below which four points count as collinear.
    pub collinearity: f64,
    /// Frobenius-normalized determinant below which a matrix is singular.
    pub singular_determinant: f64,
    /// Normalized boundary margin accepted for a point declared on the boundary.
    pub boundary_margin: f64,
    /// Largest chart coordinate a bounded domain may produce.
    pub chart_bound: f64,
    /// Spread of the finite-t Busemann values that still counts as converged.
    pub busemann_spread: f64,
    /// Geodesic distances at which the Busemann difference is sampled.
    pub busemann_times: [f64; 3],
    /// Relation residual allowed for group descriptors.
    pub relation_residual: f64,
    /// Relative stopping tolerance on the barycenter gradient.
    pub barycenter_gradient: f64,
    /// Iteration cap for the barycenter descent.
    pub barycenter_iterations: usize,
    /// Target relative error of Monte-Carlo ball volumes.
    pub volume_relative_error: f64,
    /// Relative agreement required between full and half sphere quadratures.
    pub quadrature_relative: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    point_identity: 1e-12,
    collinearity: 1e-9,
    singular_determinant: 1e-12,
    boundary_margin: 1e-10,
    chart_bound: 1e6,
    busemann_spread: 1e-6,
    busemann_times: [20.0, 25.0, 30.0],
    relation_residual: 1e-9,
    barycenter_gradient: 1e-8,
    barycenter_iterations: 10_000,
    volume_relative_error: 0.02,
    quadrature_relative: 1e-3,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}
