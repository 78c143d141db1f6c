//! Numerical Hilbert geometry on properly convex projective domains.
//!
//! The crate is organized around the objects a comparison between a convex
//! projective structure and its hyperbolic reference needs:
//!
//! - [`projective`]: homogeneous coordinates, projective maps, charts, cross-ratio.
//! - [`domain`]: convex domains given by membership and chord oracles.
//! - [`metric`]: Hilbert distance, Finsler norm, geodesics, Busemann functions.
//! - [`volume`]: Busemann–Hausdorff density, ball volumes, entropy estimators.
//! - [`group`]: discrete projective groups, orbit enumeration, cusp tooling.
//! - [`hyperbolic`]: the hyperboloid model used as reference space.
//! - [`measure`]: atomic visual and Patterson–Sullivan measures.
//! - [`barycenter`]: barycenters, the natural map, homotopy tracks, Jacobians.
//! - [`eccentricity`]: eccentricity factor of the Finsler norm.

// `!(x > 0.0)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod domain;
pub mod eccentricity;
pub mod error;
pub mod group;
pub mod hyperbolic;
pub mod measure;
pub mod metric;
pub mod projective;
pub mod quadrature;
pub mod rng;
pub mod tolerances;
pub mod volume;

pub use error::{GeometryError, Result};
pub use projective::{AffineChart, ProjectiveMap, ProjectivePoint};
pub use tolerances::{Tolerances, TOLERANCES};

/// Library version string, stamped into every emitted record.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
