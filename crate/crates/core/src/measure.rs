//! Finite atomic measures on domain boundaries: visual measures of the
//! hyperbolic reference space, Patterson–Sullivan approximants built from
//! orbit sums, boundary correspondences and halfspace masses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::group::{self, Letter, ProjectiveGroup};
use crate::hyperbolic::{ideal_point, minkowski, HyperbolicPoint, Isometry};
use crate::metric;
use crate::projective::{ProjectiveMap, ProjectivePoint};
use crate::quadrature::sphere_area;
use crate::rng;
use crate::tolerances::TOLERANCES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureTag {
    Visual,
    PattersonSullivan,
    Mixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: ProjectivePoint,
    pub weight: f64,
    /// Orbit index the atom came from, when it came from one.
    pub label: Option<u32>,
}

/// Parameters a Patterson–Sullivan approximant was built with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsMetadata {
    pub exponent: f64,
    pub r_max: f64,
    pub truncation: Truncation,
    pub orbit_points: usize,
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMeasure {
    atoms: Vec<Atom>,
    total_mass: f64,
    tag: MeasureTag,
    pub metadata: Option<PsMetadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomRecord {
    pub chart: Vec<f64>,
    pub weight: f64,
}

/// Plot-friendly form: chart coordinates and weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureRecord {
    pub tag: MeasureTag,
    pub total_mass: f64,
    pub metadata: Option<PsMetadata>,
    pub atoms: Vec<AtomRecord>,
}

fn lexicographic(a: &ProjectivePoint, b: &ProjectivePoint) -> std::cmp::Ordering {
    a.coords()
        .iter()
        .zip(b.coords().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl BoundaryMeasure {
    /// Sorts atoms canonically and merges those at the same projective point.
    pub fn new(mut atoms: Vec<Atom>, tag: MeasureTag) -> Result<Self> {
        if let Some((index, _)) = atoms
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.weight > 0.0) || !a.weight.is_finite())
        {
            return Err(GeometryError::InvalidArgument(format!(
                "atom {index} has non-positive weight"
            )));
        }
        atoms.sort_by(|a, b| lexicographic(&a.point, &b.point).then(a.label.cmp(&b.label)));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for atom in atoms {
            match merged.last_mut() {
                Some(last) if last.point.approx_eq(&atom.point, TOLERANCES.point_identity) => {
                    last.weight += atom.weight;
                }
                _ => merged.push(atom),
            }
        }
        let total_mass = merged.iter().map(|a| a.weight).sum();
        Ok(Self {
            atoms: merged,
            total_mass,
            tag,
            metadata: None,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn tag(&self) -> MeasureTag {
        self.tag
    }

    /// Largest atom weight as a fraction of the total mass.
    pub fn max_atom_fraction(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).fold(0.0, f64::max) / self.total_mass
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                weight: a.weight * c,
                ..a.clone()
            })
            .collect();
        let mut m = Self::new(atoms, self.tag)?;
        m.metadata = self.metadata;
        Ok(m)
    }

    /// `a·λ + b·μ`; terms with zero coefficient are dropped.
    pub fn mixture(a: f64, lambda: &Self, b: f64, mu: &Self) -> Result<Self> {
        if a < 0.0 || b < 0.0 || a + b == 0.0 {
            return Err(GeometryError::InvalidArgument(format!(
                "mixture coefficients ({a}, {b}) must be non-negative and not both zero"
            )));
        }
        let mut atoms = Vec::with_capacity(lambda.len() + mu.len());
        for (c, m) in [(a, lambda), (b, mu)] {
            if c > 0.0 {
                atoms.extend(m.atoms.iter().map(|x| Atom {
                    weight: c * x.weight,
                    ..x.clone()
                }));
            }
        }
        let tag = match (a > 0.0, b > 0.0) {
            (true, false) => lambda.tag,
            (false, true) => mu.tag,
            _ => MeasureTag::Mixture,
        };
        let mut m = Self::new(atoms, tag)?;
        m.metadata = match tag {
            MeasureTag::Mixture => None,
            _ if a > 0.0 => lambda.metadata,
            _ => mu.metadata,
        };
        Ok(m)
    }

    /// `g_*λ`: atoms moved by a projective map, weights kept.
    pub fn transformed(&self, g: &ProjectiveMap) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                point: g.apply(&a.point),
                ..a.clone()
            })
            .collect();
        let mut m = Self::new(atoms, self.tag)?;
        m.metadata = self.metadata;
        Ok(m)
    }

    /// Ideal points `(1, u)` of the atoms, for measures on the sphere at
    /// infinity of the Klein ball.
    pub fn ideal_points(&self) -> Result<Vec<DVector<f64>>> {
        self.atoms
            .iter()
            .map(|a| crate::hyperbolic::ideal_from_projective(&a.point))
            .collect()
    }

    pub fn record(&self, domain: &ConvexDomain) -> Result<MeasureRecord> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                Ok(AtomRecord {
                    chart: domain.to_chart(&a.point)?.iter().copied().collect(),
                    weight: a.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MeasureRecord {
            tag: self.tag,
            total_mass: self.total_mass,
            metadata: self.metadata,
            atoms,
        })
    }
}

/// A closed halfspace `{X : ⟨X, ν⟩ ≥ 0}` of the hyperboloid model, with `ν`
/// spacelike of unit length, or the open complement. In the Klein chart it is
/// the linear inequality `ν₁c₁ + ⋯ + ν_nc_n ≥ ν₀`; its trace at infinity is a
/// spherical cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfspaceAtInfinity {
    normal: Vec<f64>,
    closed: bool,
}

impl HalfspaceAtInfinity {
    pub fn from_normal(nu: &DVector<f64>) -> Result<Self> {
        let q = minkowski(nu, nu);
        if !(q > 0.0) {
            return Err(GeometryError::InvalidArgument(
                "halfspace normal must be spacelike".into(),
            ));
        }
        Ok(Self {
            normal: (nu / q.sqrt()).iter().copied().collect(),
            closed: true,
        })
    }

    /// `{c : n·c ≥ a}` in the Klein chart, `|a| < |n|`.
    pub fn from_chart(n: &DVector<f64>, a: f64) -> Result<Self> {
        let mut nu = DVector::zeros(n.len() + 1);
        nu[0] = a;
        nu.rows_mut(1, n.len()).copy_from(n);
        Self::from_normal(&nu)
    }

    /// Halfspace bounded by the hyperplane through `y` orthogonal to tangent
    /// `v`, on the side `v` points to.
    pub fn through(y: &HyperbolicPoint, v: &DVector<f64>) -> Result<Self> {
        Self::from_normal(&y.project_tangent(v))
    }

    /// Halfspace whose cap is centered at ideal point `xi`, with boundary
    /// hyperplane at distance `offset` from `o` (negative: `o` inside).
    pub fn facing(o: &HyperbolicPoint, xi: &DVector<f64>, offset: f64) -> Result<Self> {
        let foot = o.towards(xi, offset);
        Self::through(&foot, &foot.direction_to(xi))
    }

    pub fn normal(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.normal)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn complement(&self) -> Self {
        Self {
            normal: self.normal.iter().map(|x| -x).collect(),
            closed: !self.closed,
        }
    }

    fn test(&self, value: f64) -> bool {
        if self.closed {
            value >= 0.0
        } else {
            value > 0.0
        }
    }

    /// The chart-linear form `ν₁c₁ + ⋯ − ν₀`, non-negative on the closed halfspace.
    pub fn chart_value(&self, c: &DVector<f64>) -> f64 {
        self.normal[1..]
            .iter()
            .zip(c.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            - self.normal[0]
    }

    pub fn contains_ideal(&self, xi: &DVector<f64>) -> bool {
        self.test(minkowski(xi, &self.normal()))
    }

    /// Cap membership of a projective point on the sphere at infinity,
    /// evaluated through the chart inequality.
    pub fn contains_boundary(&self, p: &ProjectivePoint) -> bool {
        let c = p.coords();
        if c[0] == 0.0 {
            return false;
        }
        let chart = c.rows(1, c.len() - 1) / c[0];
        self.test(self.chart_value(&chart))
    }

    pub fn contains_point(&self, y: &HyperbolicPoint) -> bool {
        self.test(minkowski(y.coords(), &self.normal()))
    }

    /// Positive outside, `asinh(−⟨y, ν⟩)`; the distance to the halfspace when positive.
    pub fn signed_distance(&self, y: &HyperbolicPoint) -> f64 {
        (-minkowski(y.coords(), &self.normal())).asinh()
    }

    pub fn distance(&self, y: &HyperbolicPoint) -> f64 {
        self.signed_distance(y).max(0.0)
    }

    /// Unit tangent at `y` towards the halfspace along the perpendicular.
    pub fn direction_from(&self, y: &HyperbolicPoint) -> DVector<f64> {
        let t = y.project_tangent(&self.normal());
        let len = minkowski(&t, &t).sqrt();
        t / len
    }
}

/// Mass of the atoms inside the cap, closed convention on its rim.
pub fn halfspace_mass(lambda: &BoundaryMeasure, h: &HalfspaceAtInfinity) -> f64 {
    lambda
        .atoms
        .iter()
        .filter(|a| h.contains_boundary(&a.point))
        .map(|a| a.weight)
        .sum()
}

/// How visual-measure directions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSampling {
    /// Randomly shifted lattice on the circle; randomly rotated spherical
    /// Fibonacci points on the 2-sphere.
    QuasiRandom,
    Independent,
}

/// Minimum atom count of a visual measure.
pub const MIN_VISUAL_ATOMS: usize = 16;

fn random_rotation<R: Rng + ?Sized>(r: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng::gaussian_vector(r, 1)[0]);
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..n {
        if rr[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

fn unit_directions(
    n: usize,
    count: usize,
    seed: u64,
    sampling: DirectionSampling,
) -> Result<Vec<DVector<f64>>> {
    let mut r = rng::stream(seed, 0x7615);
    match (sampling, n) {
        (DirectionSampling::Independent, _) => {
            Ok((0..count).map(|_| rng::unit_vector(&mut r, n)).collect())
        }
        (DirectionSampling::QuasiRandom, 2) => {
            let shift: f64 = r.random();
            Ok((0..count)
                .map(|k| {
                    let th = 2.0 * PI * (k as f64 + shift) / count as f64;
                    DVector::from_vec(vec![th.cos(), th.sin()])
                })
                .collect())
        }
        (DirectionSampling::QuasiRandom, 3) => {
            let rot = random_rotation(&mut r, 3);
            let golden = PI * (3.0 - 5f64.sqrt());
            Ok((0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let ph = golden * k as f64;
                    &rot * DVector::from_vec(vec![rho * ph.cos(), rho * ph.sin(), z])
                })
                .collect())
        }
        _ => Err(GeometryError::Unsupported(format!(
            "quasi-random directions in dimension {n}"
        ))),
    }
}

/// Visual measure at `y` with quasi-random directions.
pub fn visual_measure(y: &HyperbolicPoint, atoms: usize, seed: u64) -> Result<BoundaryMeasure> {
    visual_measure_with(y, atoms, seed, DirectionSampling::QuasiRandom)
}

/// Equal-weight atoms at the endpoints of rays from `y` in directions spread
/// over the unit tangent sphere; the total mass is the sphere's area.
pub fn visual_measure_with(
    y: &HyperbolicPoint,
    atoms: usize,
    seed: u64,
    sampling: DirectionSampling,
) -> Result<BoundaryMeasure> {
    if atoms < MIN_VISUAL_ATOMS {
        return Err(GeometryError::InvalidArgument(format!(
            "visual measures need at least {MIN_VISUAL_ATOMS} atoms, got {atoms}"
        )));
    }
    let n = y.dim();
    let boost = Isometry::boost_to(y);
    let weight = sphere_area(n) / atoms as f64;
    let list = unit_directions(n, atoms, seed, sampling)?
        .into_iter()
        .map(|u| {
            let mut xi = DVector::zeros(n + 1);
            xi[0] = 1.0;
            xi.rows_mut(1, n).copy_from(&u);
            Atom {
                point: ProjectivePoint::new(boost.apply_ideal(&xi))
                    .expect("ideal points are nonzero"),
                weight,
                label: None,
            }
        })
        .collect();
    BoundaryMeasure::new(list, MeasureTag::Visual)
}

/// Which orbit points enter a Patterson–Sullivan approximant at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// `d(o, γo) ≤ R`: the same orbit points at every evaluation point.
    Basepoint,
    /// `d(x, γo) ≤ R`: exactly equivariant, `μ_{γx} = γ_*μ_x`.
    EvaluationPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsParams {
    /// Exponent `s`, taken above the critical exponent.
    pub exponent: f64,
    pub r_max: f64,
    pub truncation: Truncation,
    /// For evaluation-point truncation: largest `d(o, x)` that will be queried.
    pub reach: f64,
}

impl PsParams {
    pub fn new(exponent: f64, r_max: f64) -> Self {
        Self {
            exponent,
            r_max,
            truncation: Truncation::Basepoint,
            reach: 0.0,
        }
    }
}

/// Orbit points `γo` below a radius, precomputed once, from which
/// approximants at any point are assembled.
#[derive(Debug, Clone)]
pub struct PsFamily {
    domain: ConvexDomain,
    params: PsParams,
    dim: usize,
    /// Chart coordinates, flattened.
    coords: Vec<f64>,
    /// `d(o, γo)`.
    distances: Vec<f64>,
    /// Breadth-first node of each stored point.
    nodes: Vec<u32>,
    /// Parent node and letter of every visited node, when recorded.
    tree: Option<(Vec<u32>, Vec<u8>)>,
    letters: Vec<Letter>,
    normalization: f64,
    basepoint: DVector<f64>,
}

impl PsFamily {
    /// Enumerate `{γo : d(o, γo) ≤ R}` (plus `reach` for evaluation-point
    /// truncation). With `record_words` the word tree is kept for
    /// relabeling correspondences.
    pub fn new(
        domain: &ConvexDomain,
        group: &ProjectiveGroup,
        o: &ProjectivePoint,
        params: PsParams,
        record_words: bool,
    ) -> Result<Self> {
        if !(params.exponent > 0.0 && params.r_max > 0.0 && params.reach >= 0.0) {
            return Err(GeometryError::InvalidArgument(
                "exponent and radius must be positive".into(),
            ));
        }
        let radius = match params.truncation {
            Truncation::Basepoint => params.r_max,
            Truncation::EvaluationPoint => params.r_max + params.reach,
        };
        let n = domain.dim();
        let chart = domain.chart();
        let mut coords = Vec::new();
        let mut distances = Vec::new();
        let mut nodes = Vec::new();
        let mut parents = Vec::new();
        let mut letters_of = Vec::new();
        group::for_each_orbit_point(group, domain, o, radius, false, |visit| {
            if record_words {
                let (p, l) = visit.parent.unwrap_or((u32::MAX, 0));
                parents.push(p);
                letters_of.push(l as u8);
            }
            if visit.distance <= radius {
                let c = chart
                    .coords_of_vector(&DVector::from_column_slice(visit.vector))
                    .expect("kept orbit vectors lie in the chart");
                coords.extend(c.iter().copied());
                distances.push(visit.distance);
                nodes.push(visit.node);
            }
        })?;
        let normalization: f64 = distances
            .iter()
            .filter(|&&d| d > 0.0 && d <= params.r_max)
            .map(|d| (-params.exponent * d).exp())
            .sum();
        let count = distances.iter().filter(|&&d| d <= params.r_max).count();
        if count < crate::volume::MIN_ORBIT_COUNT {
            return Err(GeometryError::OrbitTooSmall {
                found: count,
                needed: crate::volume::MIN_ORBIT_COUNT,
            });
        }
        Ok(Self {
            domain: domain.clone(),
            params,
            dim: n,
            coords,
            distances,
            nodes,
            tree: record_words.then_some((parents, letters_of)),
            letters: group.letters().to_vec(),
            normalization,
            basepoint: domain.to_chart(o)?,
        })
    }

    pub fn params(&self) -> PsParams {
        self.params
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    /// Number of stored orbit points.
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn orbit_point(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.coords[i * self.dim..(i + 1) * self.dim])
    }

    /// Atom of orbit point `i` seen from chart point `x`: forward chord
    /// endpoint of the ray towards it and the distance to it.
    fn atom_at(&self, x: &DVector<f64>, i: usize) -> Result<Option<(DVector<f64>, f64)>> {
        let v = self.orbit_point(i) - x;
        if v.norm() <= 1e-14 * (1.0 + x.norm()) {
            return Ok(None);
        }
        let (t_a, t_b) = self.domain.chord_params(x, &v)?;
        if !(t_b > 1.0) {
            return Err(GeometryError::PointOutsideDomain);
        }
        let d = 0.5 * ((1.0 / -t_a).ln_1p() + (1.0 / (t_b - 1.0)).ln_1p());
        Ok(Some((x + v * t_b, d)))
    }

    /// The approximant `μ_x = Z⁻¹ Σ e^{−s·d(x, γo)} δ_{ξ(x, γo)}` with `Z`
    /// fixing `‖μ_o‖ = 1`. Orbit points coinciding with `x` carry no direction
    /// and are left out (also from `Z`).
    pub fn measure_at(&self, x: &ProjectivePoint) -> Result<BoundaryMeasure> {
        let xc = self
            .domain
            .to_chart(x)
            .map_err(|_| GeometryError::PointOutsideDomain)?;
        if !self.domain.contains_chart(&xc) {
            return Err(GeometryError::PointOutsideDomain);
        }
        let s = self.params.exponent;
        let r = self.params.r_max;
        let by_basepoint = self.params.truncation == Truncation::Basepoint;
        if !by_basepoint {
            let reach = metric::distance_chart(&self.domain, &self.basepoint, &xc)?;
            if reach > self.params.reach + 1e-9 {
                return Err(GeometryError::InvalidArgument(format!(
                    "evaluation point at distance {reach} exceeds the family's reach {}",
                    self.params.reach
                )));
            }
        }
        let atoms: Vec<Option<Atom>> = (0..self.len())
            .into_par_iter()
            .map(|i| -> Result<Option<Atom>> {
                if by_basepoint && self.distances[i] > r {
                    return Ok(None);
                }
                let Some((end, d)) = self.atom_at(&xc, i)? else {
                    return Ok(None);
                };
                if !by_basepoint && d > r {
                    return Ok(None);
                }
                Ok(Some(Atom {
                    point: self.domain.from_chart(&end),
                    weight: (-s * d).exp() / self.normalization,
                    label: Some(i as u32),
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .flatten()
            .filter(|a| a.weight > 0.0)
            .collect();
        if atoms.is_empty() {
            return Err(GeometryError::OrbitTooSmall {
                found: 0,
                needed: 1,
            });
        }
        let mut m = BoundaryMeasure::new(atoms, MeasureTag::PattersonSullivan)?;
        m.metadata = Some(PsMetadata {
            exponent: s,
            r_max: r,
            truncation: self.params.truncation,
            orbit_points: m.len(),
            normalization: self.normalization,
        });
        Ok(m)
    }
}

/// One-shot approximant at `x` with basepoint truncation. `seed` drives the
/// sampled check that the group preserves the domain.
#[allow(clippy::too_many_arguments)]
pub fn ps_approximant(
    domain: &ConvexDomain,
    group: &ProjectiveGroup,
    x: &ProjectivePoint,
    o: &ProjectivePoint,
    s: f64,
    r_max: f64,
    seed: u64,
) -> Result<BoundaryMeasure> {
    group.validate_preserves(domain, 32, 3.0, seed)?;
    PsFamily::new(domain, group, o, PsParams::new(s, r_max), false)?.measure_at(x)
}

/// Boundary correspondence from a domain to the sphere at infinity of the
/// Klein ball.
#[derive(Debug, Clone)]
pub enum Correspondence {
    /// The domain is the Klein ball itself.
    Identity,
    /// Orbit relabeling: the atom of `γo` goes to `γ′·ζ₀`, where `γ′` is the
    /// same word in a matched target group. Indexed by orbit label.
    Relabel { images: Vec<DVector<f64>> },
}

impl Correspondence {
    /// Relabeling through `target`, which must have the same letters as the
    /// family's group and preserve the Klein ball; `zeta0` is an ideal point.
    pub fn orbit_relabel(
        family: &PsFamily,
        target: &ProjectiveGroup,
        zeta0: &DVector<f64>,
    ) -> Result<Self> {
        let (parents, letters) = family.tree.as_ref().ok_or_else(|| {
            GeometryError::InvalidArgument("relabeling needs a family built with words".into())
        })?;
        if target.letters() != family.letters.as_slice() {
            return Err(GeometryError::InvalidArgument(
                "target group has a different alphabet".into(),
            ));
        }
        if zeta0.len() != target.dim() + 1
            || minkowski(zeta0, zeta0).abs() > 1e-9 * zeta0.norm_squared()
        {
            return Err(GeometryError::InvalidArgument(
                "ζ₀ must be an ideal point".into(),
            ));
        }
        let maps: Vec<&DMatrix<f64>> = (0..target.letters().len())
            .map(|i| target.letter_map(i).matrix())
            .collect();
        let mut node_images: Vec<DVector<f64>> = Vec::with_capacity(parents.len());
        for (&p, &l) in parents.iter().zip(letters) {
            let image = if p == u32::MAX {
                ideal_point(zeta0)
            } else {
                let v = maps[l as usize] * &node_images[p as usize];
                let v = if v[0] < 0.0 { -v } else { v };
                ideal_point(&v)
            };
            node_images.push(image);
        }
        let images = family
            .nodes
            .iter()
            .map(|&n| node_images[n as usize].clone())
            .collect();
        Ok(Self::Relabel { images })
    }
}

/// `f_*λ`: atoms moved by the correspondence, weights untouched.
pub fn pushforward(fmap: &Correspondence, lambda: &BoundaryMeasure) -> Result<BoundaryMeasure> {
    match fmap {
        Correspondence::Identity => Ok(lambda.clone()),
        Correspondence::Relabel { images } => {
            let atoms = lambda
                .atoms
                .iter()
                .enumerate()
                .map(|(index, a)| {
                    let image = a
                        .label
                        .and_then(|l| images.get(l as usize))
                        .ok_or(GeometryError::UnmappedAtom { index })?;
                    Ok(Atom {
                        point: ProjectivePoint::new(image.clone())?,
                        weight: a.weight,
                        label: a.label,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut m = BoundaryMeasure::new(atoms, lambda.tag)?;
            m.metadata = lambda.metadata;
            Ok(m)
        }
    }
}
