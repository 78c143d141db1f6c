//! Breadth-first orbit enumeration.
//!
//! Elements are grown by left multiplication, `g ↦ l·g`, so only orbit
//! vectors `g·o` are needed, never matrices. Duplicates are detected on the
//! quantized orbit vector; since breadth-first depths of neighbours differ by
//! at most one, only three layers are kept in the dedup tables.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Letter, ProjectiveGroup, Word};
use crate::domain::ConvexDomain;
use crate::error::{GeometryError, Result};
use crate::metric;
use crate::projective::ProjectivePoint;

/// Fraction of a cell treated as ambiguous near a cell wall.
const WALL_FRACTION: f64 = 1e-3;

/// Default absolute resolution for orbit-vector deduplication.
pub const ORBIT_RESOLUTION: f64 = 1e-5;

/// An element reached by the enumeration.
pub struct Visit<'a> {
    pub vector: &'a [f64],
    pub distance: f64,
    pub length: usize,
    /// Breadth-first index of the element; the root is 0.
    pub node: u32,
    /// `(parent node, letter index)` with element `= letter · parent`.
    pub parent: Option<(u32, usize)>,
    tree: Option<&'a WordTree>,
}

impl Visit<'_> {
    /// Word of the element, if words are being recorded.
    pub fn word(&self) -> Option<Word> {
        self.tree.map(|t| t.word(self.node))
    }
}

/// Parent pointers of the breadth-first tree.
pub(crate) struct WordTree {
    parent: Vec<u32>,
    letter: Vec<u8>,
    alphabet: Vec<Letter>,
}

const ROOT: u32 = u32::MAX;

impl WordTree {
    fn word(&self, mut node: u32) -> Word {
        let mut w = Vec::new();
        while self.parent[node as usize] != ROOT {
            w.push(self.alphabet[self.letter[node as usize] as usize]);
            node = self.parent[node as usize];
        }
        w
    }
}

/// Quantized lookup table for one breadth-first layer.
struct Layer {
    dim: usize,
    coords: Vec<f64>,
    nodes: Vec<u32>,
    heads: HashMap<u64, u32>,
    next: Vec<u32>,
}

fn mix(mut h: u64, x: i64) -> u64 {
    h ^= x as u64;
    h = h.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h ^ (h >> 29)
}

impl Layer {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
            nodes: Vec::new(),
            heads: HashMap::new(),
            next: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn cells(v: &[f64], res: f64) -> (Vec<i64>, Vec<(usize, i64)>) {
        let mut base = Vec::with_capacity(v.len());
        let mut alternates = Vec::new();
        for (i, x) in v.iter().enumerate() {
            let s = x / res;
            let c = s.floor();
            let frac = s - c;
            base.push(c as i64);
            if frac < WALL_FRACTION {
                alternates.push((i, c as i64 - 1));
            } else if frac > 1.0 - WALL_FRACTION {
                alternates.push((i, c as i64 + 1));
            }
        }
        (base, alternates)
    }

    fn hash(cells: &[i64]) -> u64 {
        cells.iter().fold(0x51_7cc1_b727_220a, |h, &c| mix(h, c))
    }

    fn find(&self, v: &[f64], res: f64) -> Option<usize> {
        let (base, alternates) = Self::cells(v, res);
        for mask in 0..(1usize << alternates.len()) {
            let mut cells = base.clone();
            for (bit, &(i, c)) in alternates.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    cells[i] = c;
                }
            }
            let mut cursor = self.heads.get(&Self::hash(&cells)).copied();
            while let Some(i) = cursor {
                let i = i as usize;
                let w = self.vector(i);
                if v.iter().zip(w).all(|(a, b)| (a - b).abs() < res) {
                    return Some(i);
                }
                cursor = (self.next[i] != ROOT).then_some(self.next[i]);
            }
        }
        None
    }

    fn insert(&mut self, v: &[f64], node: u32, res: f64) {
        let (base, _) = Self::cells(v, res);
        let idx = self.len() as u32;
        let key = Self::hash(&base);
        let prev = self.heads.insert(key, idx);
        self.next.push(prev.unwrap_or(ROOT));
        self.coords.extend_from_slice(v);
        self.nodes.push(node);
    }
}

/// Orient a homogeneous vector so that the functional is positive on it.
fn orient(v: &mut [f64], functional: &[f64]) {
    let f: f64 = v.iter().zip(functional).map(|(a, b)| a * b).sum();
    if f < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..n).map(|j| m[(i, j)] * v[j]).sum();
    }
}

/// Layered breadth-first enumeration of `{g·probe}`.
///
/// `keep` maps an oriented orbit vector to a distance, or rejects it; only
/// kept elements are visited and expanded. `functional` fixes the sign of
/// orbit vectors. Visits happen in breadth-first order, which is
/// deterministic and independent of the thread count.
#[allow(clippy::too_many_arguments)]
pub(crate) fn enumerate_with<K, V>(
    group: &ProjectiveGroup,
    probe: &DVector<f64>,
    functional: &DVector<f64>,
    max_len: Option<usize>,
    resolution: f64,
    record_words: bool,
    keep: K,
    mut visit: V,
) where
    K: Fn(&[f64]) -> Option<f64> + Sync,
    V: FnMut(Visit<'_>),
{
    let dim = probe.len();
    let letters: Vec<&DMatrix<f64>> = (0..group.letters().len())
        .map(|i| group.letter_map(i).matrix())
        .collect();
    let functional: Vec<f64> = functional.iter().copied().collect();
    let mut tree = record_words.then(|| WordTree {
        parent: Vec::new(),
        letter: Vec::new(),
        alphabet: group.letters().to_vec(),
    });

    let mut root: Vec<f64> = probe.iter().copied().collect();
    orient(&mut root, &functional);
    let Some(root_distance) = keep(&root) else {
        return;
    };
    let mut older = Layer::new(dim);
    let mut current = Layer::new(dim);
    let mut node_count: u32 = 0;
    current.insert(&root, node_count, resolution);
    if let Some(t) = tree.as_mut() {
        t.parent.push(ROOT);
        t.letter.push(0);
    }
    visit(Visit {
        vector: &root,
        distance: root_distance,
        length: 0,
        node: 0,
        parent: None,
        tree: tree.as_ref(),
    });
    node_count += 1;

    let mut length = 0;
    while current.len() > 0 && max_len.is_none_or(|m| length < m) {
        length += 1;
        let candidates: Vec<(usize, usize)> = (0..current.len())
            .flat_map(|i| (0..letters.len()).map(move |l| (i, l)))
            .collect();
        let evaluated: Vec<Option<(Vec<f64>, f64)>> = candidates
            .par_iter()
            .map(|&(i, l)| {
                let mut v = vec![0.0; dim];
                mat_vec(letters[l], current.vector(i), &mut v);
                orient(&mut v, &functional);
                if current.find(&v, resolution).is_some() || older.find(&v, resolution).is_some() {
                    return None;
                }
                keep(&v).map(|d| (v, d))
            })
            .collect();
        let mut fresh = Layer::new(dim);
        for (&(i, l), item) in candidates.iter().zip(evaluated) {
            let Some((v, d)) = item else { continue };
            if fresh.find(&v, resolution).is_some() {
                continue;
            }
            let node = node_count;
            node_count = node_count
                .checked_add(1)
                .expect("orbit enumeration overflow");
            fresh.insert(&v, node, resolution);
            if let Some(t) = tree.as_mut() {
                t.parent.push(current.nodes[i]);
                t.letter.push(l as u8);
            }
            visit(Visit {
                vector: &v,
                distance: d,
                length,
                node,
                parent: Some((current.nodes[i], l)),
                tree: tree.as_ref(),
            });
        }
        older = std::mem::replace(&mut current, fresh);
    }
}

/// Convenience wrapper used by [`ProjectiveGroup::elements_up_to`].
pub(crate) fn enumerate<K, V>(
    group: &ProjectiveGroup,
    probe: &DVector<f64>,
    max_len: Option<usize>,
    resolution: f64,
    keep: K,
    visit: V,
) where
    K: Fn(&[f64]) -> Option<f64> + Sync,
    V: FnMut(Visit<'_>),
{
    let functional = group
        .preferred_chart()
        .map(|c| c.functional().clone())
        .unwrap_or_else(|| probe.clone());
    enumerate_with(
        group,
        probe,
        &functional,
        max_len,
        resolution,
        true,
        keep,
        visit,
    );
}

/// An orbit point `γ·o` with its word and distance from `o`.
#[derive(Debug, Clone)]
pub struct OrbitPoint {
    pub word: Word,
    pub point: ProjectivePoint,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct OrbitBall {
    pub radius: f64,
    /// Radius up to which partial words were expanded.
    pub search_radius: f64,
    pub points: Vec<OrbitPoint>,
}

/// Homogeneous representative of `o` used for orbit vectors: unit norm and
/// positive on the domain's chart.
pub(crate) fn orbit_probe(domain: &ConvexDomain, o: &ProjectivePoint) -> Result<DVector<f64>> {
    if !domain.contains(o) {
        return Err(GeometryError::PointOutsideDomain);
    }
    let mut v = o.coords().clone();
    if domain.chart().evaluate(&v) < 0.0 {
        v.neg_mut();
    }
    Ok(v)
}

/// Pruned search radius: `R + 2·max generator displacement at o`.
pub fn search_radius(
    group: &ProjectiveGroup,
    domain: &ConvexDomain,
    o: &ProjectivePoint,
    r_max: f64,
) -> Result<f64> {
    let oc = domain.to_chart(o)?;
    Ok(r_max + 2.0 * group.max_generator_displacement(domain, &oc)?)
}

/// Visit every orbit point within the pruned search radius; the visitor
/// filters by its own radius. Returns the search radius used.
pub fn for_each_orbit_point<V>(
    group: &ProjectiveGroup,
    domain: &ConvexDomain,
    o: &ProjectivePoint,
    r_max: f64,
    record_words: bool,
    visit: V,
) -> Result<f64>
where
    V: FnMut(Visit<'_>),
{
    let probe = orbit_probe(domain, o)?;
    let oc = domain.to_chart(o)?;
    let search = search_radius(group, domain, o, r_max)?;
    let chart = domain.chart();
    let keep = |v: &[f64]| -> Option<f64> {
        let c = chart
            .coords_of_vector(&DVector::from_column_slice(v))
            .ok()?;
        let d = metric::distance_chart(domain, &oc, &c).ok()?;
        (d <= search).then_some(d)
    };
    enumerate_with(
        group,
        &probe,
        chart.functional(),
        None,
        ORBIT_RESOLUTION,
        record_words,
        keep,
        visit,
    );
    Ok(search)
}

/// All orbit points with `d(o, γo) ≤ r_max`, sorted shortlex by word.
pub fn orbit_ball(
    group: &ProjectiveGroup,
    domain: &ConvexDomain,
    o: &ProjectivePoint,
    r_max: f64,
) -> Result<OrbitBall> {
    let mut points = Vec::new();
    let search = for_each_orbit_point(group, domain, o, r_max, true, |visit| {
        if visit.distance <= r_max {
            let word = visit.word().expect("words are recorded");
            let point = ProjectivePoint::new(DVector::from_column_slice(visit.vector))
                .expect("orbit vectors are nonzero");
            points.push(OrbitPoint {
                word,
                point,
                distance: visit.distance,
            });
        }
    })?;
    let alphabet = group.letters();
    let rank = |w: &Word| -> Vec<usize> {
        w.iter()
            .map(|l| alphabet.iter().position(|a| a == l).unwrap_or(usize::MAX))
            .collect()
    };
    points.sort_by_cached_key(|p| (p.word.len(), rank(&p.word)));
    Ok(OrbitBall {
        radius: r_max,
        search_radius: search,
        points,
    })
}
