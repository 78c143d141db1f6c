//! Invariants of the geometry, checked on random domains, points, measures
//! and maps.

use hilbert_core::barycenter::bar;
use hilbert_core::domain::ConvexDomain;
use hilbert_core::eccentricity::eccentricity;
use hilbert_core::group::builtin::triangle_lattice;
use hilbert_core::hyperbolic::{distance, HyperbolicPoint, Isometry};
use hilbert_core::measure::{
    halfspace_mass, Atom, BoundaryMeasure, HalfspaceAtInfinity, MeasureTag, PsFamily, PsParams,
    Truncation,
};
use hilbert_core::{metric, rng, ProjectiveMap, ProjectivePoint};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Ellipsoid or p-ball of dimension 2 or 3, slightly skewed.
fn domain(kind: u8, n: usize, p: f64, r: &mut ChaCha8Rng) -> ConvexDomain {
    let skew = DMatrix::identity(n + 1, n + 1)
        + DMatrix::from_fn(n + 1, n + 1, |_, _| 0.1 * r.random_range(-1.0..1.0));
    if kind == 0 {
        let mut j = DMatrix::identity(n + 1, n + 1);
        j[(0, 0)] = -1.0;
        ConvexDomain::ellipsoid(skew.transpose() * j * &skew).unwrap()
    } else {
        ConvexDomain::p_norm_ball(p, skew).unwrap()
    }
}

fn point(d: &ConvexDomain, r: &mut ChaCha8Rng, radius: f64) -> DVector<f64> {
    let o = d.basepoint_chart();
    let u = rng::unit_vector(r, d.dim());
    metric::geodesic_point_chart(d, &o, &(&o + u), r.random_range(0.0..radius)).unwrap()
}

fn boundary(d: &ConvexDomain, r: &mut ChaCha8Rng) -> DVector<f64> {
    let o = d.basepoint_chart();
    let u = rng::unit_vector(r, d.dim());
    let (_, t) = d.chord_params(&o, &u).unwrap();
    o + u * t
}

/// Measure with 3 to 8 atoms and no atom near half the mass.
fn measure(n: usize, r: &mut ChaCha8Rng) -> BoundaryMeasure {
    let count = r.random_range(3..=8);
    let atoms = (0..count)
        .map(|_| {
            let mut xi = DVector::zeros(n + 1);
            xi[0] = 1.0;
            xi.rows_mut(1, n).copy_from(&rng::unit_vector(r, n));
            Atom {
                point: ProjectivePoint::new(xi).unwrap(),
                weight: r.random_range(1.0..1.9),
                label: None,
            }
        })
        .collect();
    BoundaryMeasure::new(atoms, MeasureTag::Mixture).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hilbert_distance_is_a_metric(seed: u64, kind in 0u8..2, n in 2usize..4, p in 1.5f64..6.0) {
        let mut r = rng::stream(seed, 0);
        let d = domain(kind, n, p, &mut r);
        let (x, y, z) = (point(&d, &mut r, 3.0), point(&d, &mut r, 3.0), point(&d, &mut r, 3.0));
        let dist = |a: &DVector<f64>, b: &DVector<f64>| metric::distance_chart(&d, a, b).unwrap();
        prop_assert_eq!(dist(&x, &x), 0.0);
        prop_assert!(rel(dist(&x, &y), dist(&y, &x)) < 1e-9);
        prop_assert!(dist(&x, &z) <= dist(&x, &y) + dist(&y, &z) + 1e-9);
    }

    #[test]
    fn projective_maps_are_isometries(seed: u64, kind in 0u8..2, n in 2usize..4, p in 1.5f64..6.0) {
        let mut r = rng::stream(seed, 1);
        let d = domain(kind, n, p, &mut r);
        let m = DMatrix::identity(n + 1, n + 1) + DMatrix::from_fn(n + 1, n + 1, |_, _| 0.2 * r.random_range(-1.0..1.0));
        let g = ProjectiveMap::new(m).unwrap();
        let moved = d.transformed(&g).unwrap();
        let (x, y) = (point(&d, &mut r, 3.0), point(&d, &mut r, 3.0));
        let image = |c: &DVector<f64>| moved.chart().coords_of_vector(&g.apply_vector(&d.chart().lift(c))).unwrap();
        let before = metric::distance_chart(&d, &x, &y).unwrap();
        let after = metric::distance_chart(&moved, &image(&x), &image(&y)).unwrap();
        prop_assert!(rel(before, after) < 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn finsler_norm_is_symmetric_and_homogeneous(seed: u64, kind in 0u8..2, n in 2usize..4, c in -5.0f64..5.0) {
        let mut r = rng::stream(seed, 2);
        let d = domain(kind, n, 3.0, &mut r);
        let x = point(&d, &mut r, 3.0);
        let v = rng::unit_vector(&mut r, n);
        let f = metric::finsler_norm_chart(&d, &x, &v).unwrap();
        prop_assert!(f > 0.0);
        prop_assert!(rel(metric::finsler_norm_chart(&d, &x, &(&v * c)).unwrap(), c.abs() * f) < 1e-12);
        prop_assert!(rel(metric::finsler_norm_chart(&d, &x, &(-&v)).unwrap(), f) < 1e-12);
    }

    #[test]
    fn busemann_is_lipschitz_and_a_cocycle(seed: u64, kind in 0u8..2, n in 2usize..4) {
        let mut r = rng::stream(seed, 3);
        let d = domain(kind, n, 4.0, &mut r);
        let o = d.basepoint_chart();
        let xi = boundary(&d, &mut r);
        let (y, z) = (point(&d, &mut r, 3.0), point(&d, &mut r, 3.0));
        let b = |from: &DVector<f64>, at: &DVector<f64>| metric::busemann_chart(&d, from, &xi, at).unwrap().value;
        prop_assert!((b(&o, &y) - b(&o, &z)).abs() <= metric::distance_chart(&d, &y, &z).unwrap() + 1e-8);
        prop_assert!((b(&o, &y) - b(&o, &z) - b(&z, &y)).abs() < 1e-6);
    }

    #[test]
    fn barycenter_is_equivariant_and_scale_free(seed: u64, n in 2usize..4, scale in 0.01f64..100.0) {
        let mut r = rng::stream(seed, 4);
        let lambda = measure(n, &mut r);
        let g = Isometry::random(&mut r, n, 2.0);
        let b = bar(&lambda).unwrap().point;
        let moved = bar(&lambda.transformed(&g.to_projective()).unwrap()).unwrap().point;
        prop_assert!(distance(&moved, &g.apply(&b)) < 1e-6);
        let scaled = bar(&lambda.scaled(scale).unwrap()).unwrap().point;
        prop_assert!(distance(&scaled, &b) < 1e-9);
    }

    #[test]
    fn halfspace_and_complement_split_the_mass(seed: u64, n in 2usize..4) {
        let mut r = rng::stream(seed, 5);
        let lambda = measure(n, &mut r);
        let y = HyperbolicPoint::origin(n).exp(&{
            let mut v = DVector::zeros(n + 1);
            v.rows_mut(1, n).copy_from(&(rng::unit_vector(&mut r, n) * r.random_range(0.0..2.0)));
            v
        });
        let v = y.project_tangent(&rng::gaussian_vector(&mut r, n + 1));
        let h = HalfspaceAtInfinity::through(&y, &v).unwrap();
        let sum = halfspace_mass(&lambda, &h) + halfspace_mass(&lambda, &h.complement());
        prop_assert!(rel(sum, lambda.total_mass()) < 1e-12);
    }

    #[test]
    fn eccentricity_is_at_least_one(seed: u64, n in 2usize..4, p in 1.5f64..6.0) {
        let mut r = rng::stream(seed, 6);
        let d = domain(1, n, p, &mut r);
        let x = point(&d, &mut r, 2.0);
        let rep = eccentricity(&d, &[x]).unwrap();
        prop_assert!(rep.min_n >= 1.0 - 1e-9);
        prop_assert!(rep.samples.iter().all(|s| s.sandwich));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// With evaluation-point truncation the approximants are equivariant:
    /// `μ_{γx}` and `μ_x` have the same weights.
    #[test]
    fn ps_weights_are_equivariant(seed: u64, letter in 0usize..3) {
        let ex = triangle_lattice(4, 4, 4).unwrap();
        let mut r = rng::stream(seed, 7);
        let x = point(&ex.domain, &mut r, 1.0);
        let params = PsParams { truncation: Truncation::EvaluationPoint, reach: 2.0, ..PsParams::new(1.1, 5.0) };
        let fam = PsFamily::new(&ex.domain, &ex.group, ex.domain.basepoint(), params, false).unwrap();
        let xp = ex.domain.from_chart(&x);
        let gx = ex.group.generators()[letter].apply(&xp);
        let weights = |p: &ProjectivePoint| {
            let mut w: Vec<f64> = fam.measure_at(p).unwrap().atoms().iter().map(|a| a.weight).collect();
            w.sort_by(f64::total_cmp);
            w
        };
        let (a, b) = (weights(&xp), weights(&gx));
        prop_assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            prop_assert!(rel(*u, *v) < 1e-9);
        }
    }
}
