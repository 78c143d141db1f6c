//! Finitely generated projective groups.
//!
//! Generators are named by letters `a, b, c, …`; an upper-case letter is the
//! inverse. A word `w₀w₁…w_k` denotes the product `w₀ · w₁ ⋯ w_k`.

pub mod builtin;
pub mod cusp;
pub mod orbit;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::metric;
use crate::projective::{AffineChart, ProjectiveMap, ProjectivePoint};
use crate::rng;
use crate::tolerances::TOLERANCES;

pub use cusp::{
    classify, displacement, osculating_ellipsoids, short_loop_horoball, IsometryClass,
    IsometryKind, OsculationReport, ShortLoopHoroball,
};
pub use orbit::{for_each_orbit_point, orbit_ball, search_radius, OrbitBall, OrbitPoint, Visit};

/// A letter of the generating set: generator index plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub generator: usize,
    pub inverse: bool,
}

impl Letter {
    pub fn to_char(self) -> char {
        let c = (b'a' + self.generator as u8) as char;
        if self.inverse {
            c.to_ascii_uppercase()
        } else {
            c
        }
    }
}

pub type Word = Vec<Letter>;

pub fn word_to_string(word: &[Letter]) -> String {
    word.iter().map(|l| l.to_char()).collect()
}

#[derive(Debug, Clone)]
pub struct ProjectiveGroup {
    label: String,
    generators: Vec<ProjectiveMap>,
    /// Alphabet used for enumeration: each generator, then the inverse of
    /// each generator that is not an involution.
    letters: Vec<Letter>,
    letter_maps: Vec<ProjectiveMap>,
    relations: Vec<String>,
    preferred_chart: Option<AffineChart>,
}

/// Scale a matrix to |det| = 1.
fn unimodular(m: &DMatrix<f64>) -> DMatrix<f64> {
    let det = m.determinant();
    m / det.abs().powf(1.0 / m.nrows() as f64)
}

impl ProjectiveGroup {
    /// Generators are rescaled to |det| = 1; declared relations are checked
    /// up to scalar.
    pub fn new(
        label: impl Into<String>,
        generators: Vec<ProjectiveMap>,
        relations: Vec<String>,
    ) -> Result<Self> {
        if generators.is_empty() || generators.len() > 26 {
            return Err(GeometryError::InvalidDomain(
                "a group needs between 1 and 26 generators".into(),
            ));
        }
        let dim = generators[0].dim();
        let generators = generators
            .into_iter()
            .map(|g| {
                if g.dim() != dim {
                    return Err(GeometryError::DimensionMismatch {
                        expected: dim + 1,
                        got: g.dim() + 1,
                    });
                }
                ProjectiveMap::new(unimodular(g.matrix()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut letters = Vec::new();
        let mut letter_maps = Vec::new();
        for (i, g) in generators.iter().enumerate() {
            letters.push(Letter {
                generator: i,
                inverse: false,
            });
            letter_maps.push(g.clone());
        }
        for (i, g) in generators.iter().enumerate() {
            let squared = g.compose(g);
            if squared.projective_residual(&ProjectiveMap::identity(dim))
                > TOLERANCES.relation_residual
            {
                letters.push(Letter {
                    generator: i,
                    inverse: true,
                });
                letter_maps.push(g.inverse());
            }
        }
        let group = Self {
            label: label.into(),
            generators,
            letters,
            letter_maps,
            relations,
            preferred_chart: None,
        };
        for r in &group.relations {
            let residual = group.relation_residual(r)?;
            if residual > TOLERANCES.relation_residual {
                return Err(GeometryError::RelationViolated {
                    relation: r.clone(),
                    residual,
                });
            }
        }
        Ok(group)
    }

    pub fn with_preferred_chart(mut self, chart: AffineChart) -> Self {
        self.preferred_chart = Some(chart);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn generators(&self) -> &[ProjectiveMap] {
        &self.generators
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn preferred_chart(&self) -> Option<&AffineChart> {
        self.preferred_chart.as_ref()
    }

    /// Enumeration alphabet in its fixed order.
    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn letter_map(&self, index: usize) -> &ProjectiveMap {
        &self.letter_maps[index]
    }

    pub fn parse_word(&self, word: &str) -> Result<Word> {
        word.chars()
            .map(|c| {
                let lower = c.to_ascii_lowercase();
                if !lower.is_ascii_lowercase() {
                    return Err(GeometryError::InvalidDomain(format!("bad letter {c:?}")));
                }
                let generator = (lower as u8 - b'a') as usize;
                if generator >= self.generators.len() {
                    return Err(GeometryError::InvalidDomain(format!(
                        "unknown generator {c:?}"
                    )));
                }
                Ok(Letter {
                    generator,
                    inverse: c.is_ascii_uppercase(),
                })
            })
            .collect()
    }

    pub fn letter_matrix(&self, l: Letter) -> ProjectiveMap {
        if l.inverse {
            self.generators[l.generator].inverse()
        } else {
            self.generators[l.generator].clone()
        }
    }

    pub fn evaluate(&self, word: &[Letter]) -> ProjectiveMap {
        word.iter()
            .fold(ProjectiveMap::identity(self.dim()), |acc, &l| {
                acc.compose(&self.letter_matrix(l))
            })
    }

    pub fn evaluate_str(&self, word: &str) -> Result<ProjectiveMap> {
        Ok(self.evaluate(&self.parse_word(word)?))
    }

    pub fn relation_residual(&self, relation: &str) -> Result<f64> {
        let m = self.evaluate_str(relation)?;
        Ok(m.projective_residual(&ProjectiveMap::identity(self.dim())))
    }

    /// Largest residual over the declared relations.
    pub fn max_relation_residual(&self) -> Result<f64> {
        self.relations
            .iter()
            .map(|r| self.relation_residual(r))
            .try_fold(0.0f64, |acc, r| r.map(|r| acc.max(r)))
    }

    /// Group elements of word length ≤ `depth`, deduplicated by their action
    /// on a generic probe vector, in breadth-first order.
    pub fn elements_up_to(&self, depth: usize) -> Vec<(Word, ProjectiveMap)> {
        let probe = DVector::from_fn(self.dim() + 1, |i, _| {
            1.0 + 0.1234 * (i as f64 + 1.0).sqrt()
        });
        let mut out = Vec::new();
        orbit::enumerate(
            self,
            &probe,
            Some(depth),
            1e-6,
            |_| Some(0.0),
            |visit| {
                out.push(visit.word().expect("words are recorded"));
            },
        );
        out.into_iter()
            .map(|w| {
                let m = self.evaluate(&w);
                (w, m)
            })
            .collect()
    }

    /// Sampled check that every generator maps interior points to interior
    /// points: points at Hilbert distance ≤ `radius` from the basepoint.
    pub fn validate_preserves(
        &self,
        domain: &ConvexDomain,
        samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<()> {
        if domain.dim() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: domain.dim(),
                got: self.dim(),
            });
        }
        let mut rng = rng::stream(seed, 0x9e);
        let o = domain.basepoint_chart();
        use rand::Rng;
        let mut points = vec![o.clone()];
        for _ in 0..samples {
            let u = rng::unit_vector(&mut rng, domain.dim());
            let (_, t_b) = domain.chord_params(&o, &u)?;
            let xi = &o + &u * t_b;
            let s: f64 = rng.random_range(0.0..radius);
            points.push(metric::geodesic_point_chart(domain, &o, &xi, s)?);
        }
        for (i, g) in self.letter_maps.iter().enumerate() {
            for p in &points {
                let image = g.apply_vector(&domain.chart().lift(p));
                let inside = domain
                    .chart()
                    .coords_of_vector(&image)
                    .map(|c| domain.contains_chart(&c))
                    .unwrap_or(false);
                if !inside {
                    return Err(GeometryError::MapDoesNotPreserveDomain(format!(
                        "letter {} of {} sends an interior sample outside",
                        self.letters[i].to_char(),
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Displacement of each enumeration letter at a chart point.
    pub fn max_generator_displacement(
        &self,
        domain: &ConvexDomain,
        x: &DVector<f64>,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for g in &self.letter_maps {
            let gx = domain
                .chart()
                .coords_of_vector(&g.apply_vector(&domain.chart().lift(x)))
                .map_err(|_| GeometryError::MapDoesNotPreserveDomain(self.label.clone()))?;
            let d = metric::distance_chart(domain, x, &gx)
                .map_err(|_| GeometryError::MapDoesNotPreserveDomain(self.label.clone()))?;
            worst = worst.max(d);
        }
        Ok(worst)
    }

    pub fn apply_word(&self, word: &[Letter], p: &ProjectivePoint) -> ProjectivePoint {
        self.evaluate(word).apply(p)
    }
}

/// JSON group descriptor: explicit matrices, or one of the built-in families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupDescriptor {
    Explicit {
        label: String,
        generators: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        relations: Vec<String>,
    },
    Builtin {
        label: String,
        builtin: builtin::BuiltinGroup,
    },
}

impl GroupDescriptor {
    pub fn label(&self) -> &str {
        match self {
            Self::Explicit { label, .. } | Self::Builtin { label, .. } => label,
        }
    }

    pub fn build(&self) -> Result<ProjectiveGroup> {
        match self {
            Self::Explicit {
                label,
                generators,
                relations,
            } => {
                let maps = generators
                    .iter()
                    .map(|m| ProjectiveMap::from_rows(m))
                    .collect::<Result<Vec<_>>>()?;
                ProjectiveGroup::new(label.clone(), maps, relations.clone())
            }
            Self::Builtin { label, builtin } => {
                let mut g = builtin.build()?.group;
                g.label = label.clone();
                Ok(g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64) -> ProjectiveMap {
        let (s, c) = theta.sin_cos();
        ProjectiveMap::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, c, -s], vec![0.0, s, c]]).unwrap()
    }

    #[test]
    fn relations_are_checked() {
        let g = ProjectiveGroup::new(
            "c4",
            vec![rotation(std::f64::consts::FRAC_PI_2)],
            vec!["aaaa".into()],
        );
        assert!(g.is_ok());
        let bad = ProjectiveGroup::new("c4", vec![rotation(1.0)], vec!["aaaa".into()]);
        assert!(matches!(bad, Err(GeometryError::RelationViolated { .. })));
    }

    #[test]
    fn words_parse_and_evaluate() {
        let g = ProjectiveGroup::new("rot", vec![rotation(0.3)], vec![]).unwrap();
        let m = g.evaluate_str("aaA").unwrap();
        assert!(m.projective_residual(&rotation(0.3)) < 1e-12);
        assert!(g.parse_word("ab").is_err());
        assert_eq!(word_to_string(&g.parse_word("aA").unwrap()), "aA");
    }

    #[test]
    fn finite_group_enumeration_closes() {
        let g = ProjectiveGroup::new(
            "c6",
            vec![rotation(std::f64::consts::PI / 3.0)],
            vec!["aaaaaa".into()],
        )
        .unwrap();
        assert_eq!(g.elements_up_to(10).len(), 6);
    }

    #[test]
    fn scaling_map_does_not_preserve_the_disc() {
        let disc = ConvexDomain::unit_ball(2);
        let dilation = ProjectiveMap::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let g = ProjectiveGroup::new("bad", vec![dilation], vec![]).unwrap();
        assert!(matches!(
            g.validate_preserves(&disc, 50, 2.0, 3),
            Err(GeometryError::MapDoesNotPreserveDomain(_))
        ));
        let rot = ProjectiveGroup::new("rot", vec![rotation(0.7)], vec![]).unwrap();
        rot.validate_preserves(&disc, 50, 2.0, 3).unwrap();
    }
}
