//! Values with closed forms in hyperbolic geometry, recomputed here from
//! first principles and compared with the library.

use std::f64::consts::PI;

use hilbert_core::barycenter::{bar, halfspace_control_d};
use hilbert_core::domain::ConvexDomain;
use hilbert_core::group::builtin::{modular_lattice, parabolic_cyclic, triangle_lattice};
use hilbert_core::group::short_loop_horoball;
use hilbert_core::hyperbolic::{distance, HyperbolicPoint};
use hilbert_core::measure::{halfspace_mass, visual_measure, HalfspaceAtInfinity};
use hilbert_core::metric::{BoundaryPoint, Provenance};
use hilbert_core::quadrature::sphere_area;
use hilbert_core::volume::{self, VolumeOptions};
use nalgebra::DVector;

type Case = (usize, f64, fn(f64) -> f64);

#[test]
fn ball_volumes_match_hyperbolic_formulas() {
    let cases: [Case; 2] = [
        (2, 2.0, |r| 2.0 * PI * (r.cosh() - 1.0)),
        (3, 1.5, |r| PI * ((2.0 * r).sinh() - 2.0 * r)),
    ];
    for (n, r, exact) in cases {
        let d = ConvexDomain::unit_ball(n);
        let v = volume::ball_volume(&d, d.basepoint(), r, 17).unwrap();
        let want = exact(r);
        assert!(
            (v.estimate - want).abs() <= 3.0 * v.standard_error + 1e-3 * want,
            "n={n}: {} ± {} vs {want}",
            v.estimate,
            v.standard_error
        );
    }
}

#[test]
fn triangle_groups_have_gauss_bonnet_area() {
    // A (p, q, r) triangle has area π(1 − 1/p − 1/q − 1/r) and the Dirichlet
    // domain is a fundamental domain of the reflection group.
    for (p, q, r) in [(4, 4, 4), (3, 3, 4)] {
        let ex = triangle_lattice(p, q, r).unwrap();
        let v = volume::dirichlet_volume(
            &ex.domain,
            &ex.group,
            ex.domain.basepoint(),
            3,
            &VolumeOptions::default(),
        )
        .unwrap();
        let want = PI * (1.0 - 1.0 / p as f64 - 1.0 / q as f64 - 1.0 / r as f64);
        assert!(
            (v.estimate - want).abs() <= 3.0 * v.standard_error,
            "({p},{q},{r}): {} ± {} vs {want}",
            v.estimate,
            v.standard_error
        );
    }
}

#[test]
fn control_constant_is_the_sixty_degree_parallelism_distance() {
    // Angle of parallelism: cos Π(d) = tanh d, and Π(d) = 60° at the constant.
    for n in [2, 3] {
        let d = halfspace_control_d(n).unwrap();
        assert!((d.tanh() - 0.5).abs() < 1e-12, "n={n}: {d}");
    }
}

#[test]
fn visual_measure_mass_and_balance() {
    for n in [2, 3] {
        let y =
            HyperbolicPoint::from_klein(&DVector::from_fn(n, |i, _| 0.3 - 0.2 * i as f64)).unwrap();
        let nu = visual_measure(&y, 4096, 9).unwrap();
        assert!((nu.total_mass() - sphere_area(n)).abs() < 1e-9);
        let err = distance(&bar(&nu).unwrap().point, &y);
        // Quasi-random directions: error of order 1/N.
        assert!(err < 1e-4, "n={n}: {err}");
        // Any halfspace whose rim passes through y sees half the mass.
        let h = HalfspaceAtInfinity::through(
            &y,
            &y.project_tangent(&DVector::from_fn(n + 1, |i, _| i as f64)),
        )
        .unwrap();
        assert!((halfspace_mass(&nu, &h) / nu.total_mass() - 0.5).abs() < 2e-3);
    }
}

/// In the upper half plane, `z ↦ z + 1` moves points at height `t` by
/// `2 asinh(1/(2t))`, and the Busemann function towards `∞` from a point at
/// height `t₀` is `−log(t/t₀)`. So the exact short-loop level is
/// `−log(t*/t₀)` with `2 asinh(1/(2t*)) = ε`.
fn exact_level(epsilon: f64, basepoint_height: f64) -> f64 {
    let height = 1.0 / (2.0 * (0.5 * epsilon).sinh());
    -(height / basepoint_height).ln()
}

#[test]
fn short_loop_levels_match_the_horocycle_formula() {
    // The disc basepoint of the cyclic example is the image of i.
    for (ex, t0) in [
        (parabolic_cyclic().unwrap(), 1.0),
        (modular_lattice().unwrap(), 1.7),
    ] {
        let d = &ex.domain;
        let theta = BoundaryPoint::new(d, ex.cusp.clone().unwrap(), Provenance::Explicit).unwrap();
        let para: Vec<_> = ex
            .parabolic_generators
            .iter()
            .map(|&i| ex.group.generators()[i].clone())
            .collect();
        for eps in [0.2, 0.1, 0.05] {
            let found = short_loop_horoball(d, &para, &theta, eps, d.basepoint()).unwrap();
            let exact = exact_level(eps, t0);
            let level = found.horoball.level;
            // Certified levels sit at or below the exact one, and close to it.
            assert!(
                level <= exact + 1e-9 && level >= exact - 0.05,
                "ε={eps}: {level} vs {exact}"
            );
        }
    }
}

#[test]
fn cocompact_entropy_is_one_in_the_plane() {
    let ex = triangle_lattice(4, 4, 4).unwrap();
    let e =
        volume::entropy_poincare(&ex.domain, &ex.group, ex.domain.basepoint(), 10.0, 1).unwrap();
    assert!((e.value - 1.0).abs() < 0.05, "{e:?}");
}
