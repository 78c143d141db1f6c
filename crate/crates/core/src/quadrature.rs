//! Quadrature on the unit sphere of ℝⁿ for n = 2, 3.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{GeometryError, Result};

/// Nodes and weights; weights sum to the sphere's area.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub nodes: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

/// Volume of the Euclidean unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// Area of the unit sphere `S^{n−1}` in ℝⁿ.
pub fn sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 {
                1.0
            } else if m == 1 {
                z
            } else {
                p1
            };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

impl SphereRule {
    /// A rule with at least `min_nodes` nodes (uniform angles on the circle;
    /// Gauss–Legendre in the height times uniform azimuth on the 2-sphere).
    pub fn new(n: usize, min_nodes: usize) -> Result<Self> {
        match n {
            2 => {
                let m = min_nodes.max(8);
                let nodes = (0..m)
                    .map(|k| {
                        let th = 2.0 * PI * k as f64 / m as f64;
                        DVector::from_vec(vec![th.cos(), th.sin()])
                    })
                    .collect();
                Ok(Self {
                    nodes,
                    weights: vec![2.0 * PI / m as f64; m],
                })
            }
            3 => {
                let rings = ((min_nodes as f64 / 2.0).sqrt().ceil() as usize).max(4);
                let azimuths = 2 * rings;
                let (zs, ws) = gauss_legendre(rings);
                let mut nodes = Vec::with_capacity(rings * azimuths);
                let mut weights = Vec::with_capacity(rings * azimuths);
                for (z, w) in zs.iter().zip(&ws) {
                    let r = (1.0 - z * z).sqrt();
                    for k in 0..azimuths {
                        let ph = 2.0 * PI * (k as f64 + 0.5) / azimuths as f64;
                        nodes.push(DVector::from_vec(vec![r * ph.cos(), r * ph.sin(), *z]));
                        weights.push(w * 2.0 * PI / azimuths as f64);
                    }
                }
                Ok(Self { nodes, weights })
            }
            _ => Err(GeometryError::Unsupported(format!(
                "sphere quadrature in dimension {n}"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&DVector<f64>) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * f(u))
            .sum()
    }
}

/// Default node count for tangent-ball integrals.
pub const TANGENT_NODES: usize = 4096;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let x6: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((x6 - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_rules_integrate_moments() {
        for n in [2, 3] {
            let rule = SphereRule::new(n, TANGENT_NODES).unwrap();
            assert!(rule.len() >= TANGENT_NODES);
            let area = rule.integrate(|_| 1.0);
            assert!((area - sphere_area(n)).abs() < 1e-12);
            let second = rule.integrate(|u| u[0] * u[0]);
            assert!((second - sphere_area(n) / n as f64).abs() < 1e-12);
        }
        assert!(SphereRule::new(4, 10).is_err());
    }
}
