//! Built-in example groups with their invariant domains.
//!
//! Hyperbolic examples act on the unit ball of the chart `x₀ = 1`, the form
//! being `−x₀² + x₁² + ⋯ + x_n²`. Matrices of SL(2,ℝ) and SL(2,ℂ) act on
//! that ball through their action on 2×2 symmetric (resp. Hermitian)
//! matrices of coordinates `[[t+x, y(+iz)], [y(−iz), t−x]]`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ProjectiveGroup;
use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::projective::{AffineChart, ProjectiveMap, ProjectivePoint};

/// A group together with a domain it preserves (basepoint included) and,
/// for cusped examples, the fixed boundary point of its parabolics.
#[derive(Debug, Clone)]
pub struct BuiltinExample {
    pub group: ProjectiveGroup,
    pub domain: ConvexDomain,
    pub cusp: Option<ProjectivePoint>,
    /// Indices of generators that are parabolic and fix the cusp.
    pub parabolic_generators: Vec<usize>,
}

/// Serializable selector for the built-in families. Triangle orders of 0
/// stand for ∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BuiltinGroup {
    Triangle {
        p: u32,
        q: u32,
        r: u32,
    },
    CoxeterDeformation {
        p: u32,
        q: u32,
        r: u32,
        t: f64,
        #[serde(default = "default_hull_depth")]
        depth: usize,
    },
    ParabolicCyclic,
    ParabolicRank2,
    Modular,
}

fn default_hull_depth() -> usize {
    8
}

impl BuiltinGroup {
    pub fn build(&self) -> Result<BuiltinExample> {
        match *self {
            Self::Triangle { p, q, r } => triangle_lattice(p, q, r),
            Self::CoxeterDeformation { p, q, r, t, depth } => {
                coxeter_deformation(p, q, r, t, depth)
            }
            Self::ParabolicCyclic => parabolic_cyclic(),
            Self::ParabolicRank2 => parabolic_rank2(),
            Self::Modular => modular_lattice(),
        }
    }
}

/// Coordinates `(t, x, y)` of a real symmetric 2×2 matrix.
fn sym_coords(m: &[[f64; 2]; 2]) -> [f64; 3] {
    [
        0.5 * (m[0][0] + m[1][1]),
        0.5 * (m[0][0] - m[1][1]),
        0.5 * (m[0][1] + m[1][0]),
    ]
}

fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose2(a: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// The isometry of the Klein disc induced by `S ↦ A S Aᵀ`; it realizes the
/// Möbius action of `A` on the upper half-plane with `i ↦ origin` and
/// `∞ ↦ (1, 0)`.
pub fn sl2_lift(a: &[[f64; 2]; 2]) -> ProjectiveMap {
    let basis = [
        [[1.0, 0.0], [0.0, 1.0]],
        [[1.0, 0.0], [0.0, -1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
    ];
    let at = transpose2(a);
    let mut m = DMatrix::zeros(3, 3);
    for (j, e) in basis.iter().enumerate() {
        let image = sym_coords(&mul2(&mul2(a, e), &at));
        for i in 0..3 {
            m[(i, j)] = image[i];
        }
    }
    ProjectiveMap::new(m).expect("SL(2,R) lift is invertible")
}

type C = Complex<f64>;

fn cmul2(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let z = C::new(0.0, 0.0);
    let mut c = [[z; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// The isometry of the Klein 3-ball induced by `H ↦ A H A*`.
pub fn sl2c_lift(a: &[[C; 2]; 2]) -> ProjectiveMap {
    let o = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let i = C::new(0.0, 1.0);
    let basis = [
        [[one, o], [o, one]],
        [[one, o], [o, -one]],
        [[o, one], [one, o]],
        [[o, i], [-i, o]],
    ];
    let adj = [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ];
    let mut m = DMatrix::zeros(4, 4);
    for (j, e) in basis.iter().enumerate() {
        let h = cmul2(&cmul2(a, e), &adj);
        let coords = [
            0.5 * (h[0][0].re + h[1][1].re),
            0.5 * (h[0][0].re - h[1][1].re),
            h[0][1].re,
            h[0][1].im,
        ];
        for (r, c) in coords.iter().enumerate() {
            m[(r, j)] = *c;
        }
    }
    ProjectiveMap::new(m).expect("SL(2,C) lift is invertible")
}

/// Klein-disc point of `z = u + iv` in the upper half-plane.
pub fn half_plane_point(u: f64, v: f64) -> ProjectivePoint {
    let s = [[(u * u + v * v) / v, u / v], [u / v, 1.0 / v]];
    let c = sym_coords(&s);
    ProjectivePoint::from_slice(&c).expect("nonzero")
}

fn cartan_entry(m: u32) -> f64 {
    if m == 0 {
        -2.0
    } else {
        -2.0 * (PI / m as f64).cos()
    }
}

fn cartan(p: u32, q: u32, r: u32) -> Result<DMatrix<f64>> {
    for m in [p, q, r] {
        if m == 1 {
            return Err(GeometryError::InvalidDomain(
                "triangle orders must be ≥ 2 or ∞".into(),
            ));
        }
    }
    let inv = |m: u32| if m == 0 { 0.0 } else { 1.0 / m as f64 };
    if inv(p) + inv(q) + inv(r) >= 1.0 {
        return Err(GeometryError::InvalidDomain(
            "triangle group is not hyperbolic (1/p + 1/q + 1/r ≥ 1)".into(),
        ));
    }
    let mut a = DMatrix::from_element(3, 3, 2.0);
    a[(0, 1)] = cartan_entry(p);
    a[(1, 0)] = cartan_entry(p);
    a[(1, 2)] = cartan_entry(q);
    a[(2, 1)] = cartan_entry(q);
    a[(0, 2)] = cartan_entry(r);
    a[(2, 0)] = cartan_entry(r);
    Ok(a)
}

/// Reflections `σᵢ = I − eᵢ (row i of A)`.
fn reflections(a: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    (0..3)
        .map(|i| {
            let mut s = DMatrix::identity(3, 3);
            for j in 0..3 {
                s[(i, j)] -= a[(i, j)];
            }
            s
        })
        .collect()
}

fn triangle_relations(p: u32, q: u32, r: u32) -> Vec<String> {
    let mut rel = vec!["aa".to_string(), "bb".to_string(), "cc".to_string()];
    for (pair, m) in [("ab", p), ("bc", q), ("ca", r)] {
        if m > 0 {
            rel.push(pair.repeat(m as usize));
        }
    }
    rel
}

/// Chamber point `−A⁻¹·1`, where every reflection functional is negative.
fn chamber_point(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let inv = a
        .clone()
        .try_inverse()
        .ok_or(GeometryError::SingularMatrix { det: 0.0 })?;
    Ok(-(inv * DVector::from_element(3, 1.0)))
}

/// Reflection group of the hyperbolic triangle with angles π/p, π/q, π/r,
/// conjugated into the Klein disc. Generators are the reflections in the
/// sides; the basepoint is interior to the fundamental triangle.
pub fn triangle_lattice(p: u32, q: u32, r: u32) -> Result<BuiltinExample> {
    let a = cartan(p, q, r)?;
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    if !(eig.eigenvalues[order[0]] < 0.0 && eig.eigenvalues[order[1]] > 0.0) {
        return Err(GeometryError::InvalidDomain(
            "Cartan matrix is not of signature (2,1)".into(),
        ));
    }
    // P with A = Pᵀ J P, J = diag(−1, 1, 1).
    let mut pm = DMatrix::zeros(3, 3);
    for (row, &k) in order.iter().enumerate() {
        let scale = eig.eigenvalues[k].abs().sqrt();
        for j in 0..3 {
            pm[(row, j)] = scale * eig.eigenvectors[(j, k)];
        }
    }
    let x0 = chamber_point(&a)?;
    if (&pm * &x0)[0] < 0.0 {
        pm.row_mut(0).neg_mut();
    }
    let pinv = pm
        .clone()
        .try_inverse()
        .ok_or(GeometryError::SingularMatrix { det: 0.0 })?;
    let generators = reflections(&a)
        .into_iter()
        .map(|s| ProjectiveMap::new(&pm * s * &pinv))
        .collect::<Result<Vec<_>>>()?;
    let label = format!("triangle({p},{q},{r})");
    let group = ProjectiveGroup::new(label, generators, triangle_relations(p, q, r))?;
    let domain = ConvexDomain::unit_ball(2).with_basepoint(ProjectivePoint::new(&pm * x0)?)?;
    Ok(BuiltinExample {
        group,
        domain,
        cusp: None,
        parabolic_generators: vec![],
    })
}

/// One-parameter deformation of a triangle reflection group in SL±(3,ℝ):
/// the Cartan entries of the first pair are scaled by `e^{±t}`. The product
/// of the three off-diagonal cycle entries changes, so for all orders ≥ 3
/// and `t ≠ 0` the group is not conjugate to the hyperbolic one. The
/// invariant domain is approximated by the orbit hull of the chamber point.
pub fn coxeter_deformation(p: u32, q: u32, r: u32, t: f64, depth: usize) -> Result<BuiltinExample> {
    if [p, q, r].iter().any(|&m| m < 3) {
        return Err(GeometryError::InvalidDomain(
            "deformation needs all triangle orders ≥ 3 (finite)".into(),
        ));
    }
    let mut a = cartan(p, q, r)?;
    a[(0, 1)] *= t.exp();
    a[(1, 0)] *= (-t).exp();
    let generators = reflections(&a)
        .into_iter()
        .map(ProjectiveMap::new)
        .collect::<Result<Vec<_>>>()?;
    let chart = AffineChart::new(DVector::from_element(3, 1.0))?;
    let label = format!("coxeter({p},{q},{r};{t})");
    let group = ProjectiveGroup::new(label, generators, triangle_relations(p, q, r))?
        .with_preferred_chart(chart.clone());
    let x0 = chamber_point(&a)?;
    let seed = ProjectivePoint::new(x0.clone())?;
    for (_, g) in group.elements_up_to(depth) {
        let v = g.apply_vector(&x0);
        if chart.evaluate(&v) <= 1e-9 * v.norm() {
            return Err(GeometryError::InvalidDomain(
                "orbit leaves the preferred chart; deformation parameter too large".into(),
            ));
        }
    }
    let domain = ConvexDomain::orbit_hull(&group, &seed, depth, Some(chart))?;
    let domain = domain.with_basepoint(seed)?;
    Ok(BuiltinExample {
        group,
        domain,
        cusp: None,
        parabolic_generators: vec![],
    })
}

/// Cusp of the disc examples: the image of `∞`.
pub fn disc_cusp() -> ProjectivePoint {
    ProjectivePoint::from_slice(&[1.0, 1.0, 0.0]).expect("nonzero")
}

/// ⟨p⟩ with `p` the lift of `[[1,1],[0,1]]`, on the disc.
pub fn parabolic_cyclic() -> Result<BuiltinExample> {
    let p = sl2_lift(&[[1.0, 1.0], [0.0, 1.0]]);
    let group = ProjectiveGroup::new("parabolic-cyclic", vec![p], vec![])?;
    Ok(BuiltinExample {
        group,
        domain: ConvexDomain::unit_ball(2),
        cusp: Some(disc_cusp()),
        parabolic_generators: vec![0],
    })
}

/// ℤ² of parabolics of the 3-ball fixing `(1, 1, 0, 0)`: lifts of
/// `[[1,1],[0,1]]` and `[[1,i],[0,1]]`.
pub fn parabolic_rank2() -> Result<BuiltinExample> {
    let o = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let i = C::new(0.0, 1.0);
    let p1 = sl2c_lift(&[[one, one], [o, one]]);
    let p2 = sl2c_lift(&[[one, i], [o, one]]);
    let group = ProjectiveGroup::new("parabolic-rank2", vec![p1, p2], vec!["abAB".into()])?;
    Ok(BuiltinExample {
        group,
        domain: ConvexDomain::unit_ball(3),
        cusp: Some(ProjectivePoint::from_slice(&[1.0, 1.0, 0.0, 0.0])?),
        parabolic_generators: vec![0, 1],
    })
}

/// PSL(2,ℤ) on the disc, generated by `z ↦ −1/z` and `z ↦ z + 1`; one cusp,
/// at the image of `∞`. The basepoint is the image of `0.1 + 1.7i`, which no
/// nontrivial element fixes.
pub fn modular_lattice() -> Result<BuiltinExample> {
    let s = sl2_lift(&[[0.0, -1.0], [1.0, 0.0]]);
    let t = sl2_lift(&[[1.0, 1.0], [0.0, 1.0]]);
    let group = ProjectiveGroup::new("modular", vec![s, t], vec!["aa".into(), "ababab".into()])?;
    let domain = ConvexDomain::unit_ball(2).with_basepoint(half_plane_point(0.1, 1.7))?;
    Ok(BuiltinExample {
        group,
        domain,
        cusp: Some(disc_cusp()),
        parabolic_generators: vec![1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric;

    fn klein_form_residual(g: &ProjectiveMap) -> f64 {
        let n = g.dim() + 1;
        let mut j = DMatrix::identity(n, n);
        j[(0, 0)] = -1.0;
        let m = g.matrix();
        let scale = m.determinant().abs().powf(2.0 / n as f64);
        (m.transpose() * &j * m / scale - &j).amax()
    }

    #[test]
    fn lifts_preserve_the_form() {
        let g = sl2_lift(&[[2.0, 1.0], [3.0, 2.0]]);
        assert!(klein_form_residual(&g) < 1e-12);
        let z = |a: f64, b: f64| C::new(a, b);
        let h = sl2c_lift(&[[z(1.0, 1.0), z(0.5, 0.0)], [z(0.0, 2.0), z(0.0, -0.5)]]);
        assert!(klein_form_residual(&h) < 1e-12);
    }

    #[test]
    fn lift_realizes_the_mobius_action() {
        let a = [[2.0, 1.0], [1.0, 1.0]];
        let (u, v) = (0.3, 0.8);
        // (2z + 1)/(z + 1)
        let z = C::new(u, v);
        let w = (z * 2.0 + 1.0) / (z + 1.0);
        let image = sl2_lift(&a).apply(&half_plane_point(u, v));
        assert!(image.approx_eq(&half_plane_point(w.re, w.im), 1e-12));
    }

    #[test]
    fn triangle_groups_are_isometries_of_the_disc() {
        for (p, q, r) in [(2, 3, 7), (4, 4, 4), (2, 3, 0), (5, 5, 5)] {
            let ex = triangle_lattice(p, q, r).unwrap();
            assert!(ex.group.max_relation_residual().unwrap() < 1e-9);
            for g in ex.group.generators() {
                assert!(klein_form_residual(g) < 1e-12);
            }
            ex.group.validate_preserves(&ex.domain, 32, 3.0, 1).unwrap();
        }
        assert!(triangle_lattice(2, 3, 6).is_err());
    }

    #[test]
    fn reflection_distance_across_a_side() {
        // Basepoint distances to its mirror images are positive and finite.
        let ex = triangle_lattice(2, 3, 7).unwrap();
        let o = ex.domain.basepoint();
        for g in ex.group.generators() {
            let d = metric::hilbert_distance(&ex.domain, o, &g.apply(o)).unwrap();
            assert!(d > 1e-3 && d < 2.0);
        }
    }

    #[test]
    fn deformation_changes_the_cycle_invariant_and_keeps_relations() {
        let ex = coxeter_deformation(4, 4, 4, 0.4, 6).unwrap();
        assert!(ex.group.max_relation_residual().unwrap() < 1e-9);
        assert!(ex.domain.is_approximation());
        ex.group.validate_preserves(&ex.domain, 16, 0.3, 2).unwrap();
        assert!(coxeter_deformation(2, 3, 7, 0.4, 6).is_err());
    }

    #[test]
    fn cusped_examples_fix_their_cusp() {
        for ex in [
            parabolic_cyclic().unwrap(),
            parabolic_rank2().unwrap(),
            modular_lattice().unwrap(),
        ] {
            let cusp = ex.cusp.clone().unwrap();
            assert!(ex.domain.margin(&cusp).unwrap().abs() < 1e-12);
            for &i in &ex.parabolic_generators {
                assert!(ex.group.generators()[i]
                    .apply(&cusp)
                    .approx_eq(&cusp, 1e-12));
            }
            assert!(ex.group.max_relation_residual().unwrap() < 1e-9);
        }
    }

    #[test]
    fn descriptor_selects_a_family() {
        let g: BuiltinGroup =
            serde_json::from_str(r#"{"family":"triangle","p":2,"q":3,"r":7}"#).unwrap();
        assert_eq!(g.build().unwrap().group.label(), "triangle(2,3,7)");
    }
}
