use thiserror::Error;

/// Errors raised by the geometry, measure and barycenter routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("zero vector has no projective class")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not invertible (|det| = {det:e} after Frobenius normalization)")]
    SingularMatrix { det: f64 },
    #[error("points are not collinear (relative residual {residual:e})")]
    NonCollinear { residual: f64 },
    #[error("degenerate cross-ratio configuration")]
    DegenerateConfiguration,
    #[error("point lies on the chart's hyperplane at infinity")]
    PointAtInfinity,
    #[error("point is outside the domain")]
    PointOutsideDomain,
    #[error("degenerate chord: {0}")]
    DegenerateChord(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("Busemann limit did not converge (spread {spread:e})")]
    NonConvergent { spread: f64 },
    #[error("Monte-Carlo budget exhausted at relative error {relative_error:.4}")]
    BudgetExceeded { relative_error: f64 },
    #[error("orbit too small: {found} points (need {needed})")]
    OrbitTooSmall { found: usize, needed: usize },
    #[error("map does not preserve the domain: {0}")]
    MapDoesNotPreserveDomain(String),
    #[error("relation {relation} fails with residual {residual:e}")]
    RelationViolated { relation: String, residual: f64 },
    #[error("classification inconclusive: {0}")]
    Inconclusive(String),
    #[error("horoball level not found after {steps} bisection steps")]
    LevelNotFound { steps: usize },
    #[error("largest atom carries {fraction:.4} of the total mass")]
    MassTooConcentrated { fraction: f64 },
    #[error("barycenter descent did not converge (gradient norm {gradient_norm:e})")]
    NoConvergence { gradient_norm: f64 },
    #[error("atom {index} has no image under the boundary correspondence")]
    UnmappedAtom { index: usize },
    #[error("finite-difference levels disagree by {relative:.3}")]
    StepTooLarge { relative: f64 },
    #[error("sphere quadrature unconverged (relative change {relative:e})")]
    QuadratureUnconverged { relative: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
