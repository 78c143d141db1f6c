//! Scene files: which domain and group to load, where the basepoints sit and
//! the knobs of every suite and experiment.

use std::path::Path;

use hilbert_core::domain::{ConvexDomain, DomainDescriptor};
use hilbert_core::group::builtin::{BuiltinExample, BuiltinGroup};
use hilbert_core::group::ProjectiveGroup;
use hilbert_core::measure::Truncation;
use hilbert_core::{ProjectiveMap, ProjectivePoint};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A group given by explicit generator matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomGroup {
    pub label: String,
    pub generators: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub relations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupSpec {
    Builtin(BuiltinGroup),
    Custom(CustomGroup),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrespondenceSpec {
    Identity,
    /// Match orbit points with those of a hyperbolic group on the Klein ball
    /// with the same alphabet; atoms go to images of `zeta0`.
    Relabel {
        target: BuiltinGroup,
        zeta0: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySpec {
    pub r1: f64,
    pub r2: f64,
    /// Orbit radius of the Poincaré-series estimate.
    pub poincare_r_max: f64,
}

impl Default for EntropySpec {
    fn default() -> Self {
        Self {
            r1: 5.0,
            r2: 9.0,
            poincare_r_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsSpec {
    /// Entropy the exponent schedule is offset from; estimated when absent.
    pub h_est: Option<f64>,
    pub schedule: Vec<f64>,
    pub r_max: f64,
    pub truncation: Truncation,
}

impl Default for PsSpec {
    fn default() -> Self {
        Self {
            h_est: None,
            schedule: vec![0.2, 0.1, 0.05],
            r_max: 10.0,
            truncation: Truncation::Basepoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    /// Explicit chart points; random points are drawn when empty.
    pub points: Vec<Vec<f64>>,
    pub count: usize,
    /// Largest Hilbert distance of random points from the basepoint.
    pub radius: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            points: vec![],
            count: 8,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomotopySpec {
    pub steps: usize,
    pub visual_atoms: usize,
    /// Busemann depths of the tracked points below the basepoint's
    /// horosphere, for cusped examples.
    pub depths: Vec<f64>,
}

impl Default for HomotopySpec {
    fn default() -> Self {
        Self {
            steps: 11,
            visual_atoms: 4096,
            depths: vec![3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianSpec {
    pub step: f64,
    /// Eccentricity bound; computed from the sample points when absent.
    pub n_bound: Option<f64>,
    /// Source entropy; the PS exponent when absent.
    pub h_source: Option<f64>,
}

impl Default for JacobianSpec {
    fn default() -> Self {
        Self {
            step: 1e-3,
            n_bound: None,
            h_source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub name: String,
    #[serde(default)]
    pub domain: Option<DomainDescriptor>,
    #[serde(default)]
    pub group: Option<GroupSpec>,
    /// Projective coordinates; the domain's own basepoint when empty.
    #[serde(default)]
    pub basepoints: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub shards: Option<usize>,
    /// Monte Carlo sample budget.
    #[serde(default)]
    pub budget: Option<usize>,
    /// Trials per invariant in verification suites.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub entropy: EntropySpec,
    #[serde(default)]
    pub ps: PsSpec,
    #[serde(default = "default_correspondence")]
    pub correspondence: CorrespondenceSpec,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default)]
    pub homotopy: HomotopySpec,
    #[serde(default)]
    pub jacobian: JacobianSpec,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_trials() -> usize {
    200
}

fn default_correspondence() -> CorrespondenceSpec {
    CorrespondenceSpec::Identity
}

/// A scene with its geometry built and checked.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scene: Scene,
    pub domain: ConvexDomain,
    pub group: Option<ProjectiveGroup>,
    pub example: Option<BuiltinExample>,
    pub basepoints: Vec<ProjectivePoint>,
    /// SHA-256 of the scene's canonical JSON.
    pub scene_hash: String,
}

pub fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

impl Scene {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| schema(format!("cannot read scene {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| schema(format!("invalid scene: {e}")))
    }

    /// Build domain, group and basepoints, checking every cross reference.
    pub fn load(self) -> Result<Loaded, CliError> {
        let example = match &self.group {
            Some(GroupSpec::Builtin(b)) => {
                Some(b.build().map_err(|e| schema(format!("group: {e}")))?)
            }
            _ => None,
        };
        let group = match &self.group {
            None => None,
            Some(GroupSpec::Builtin(_)) => example.as_ref().map(|e| e.group.clone()),
            Some(GroupSpec::Custom(c)) => {
                let gens = c
                    .generators
                    .iter()
                    .map(|rows| ProjectiveMap::from_rows(rows))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| schema(format!("group generators: {e}")))?;
                Some(
                    ProjectiveGroup::new(c.label.clone(), gens, c.relations.clone())
                        .map_err(|e| schema(format!("group: {e}")))?,
                )
            }
        };
        let mut domain = match (&self.domain, &example) {
            (Some(d), _) => d
                .build(group.as_ref())
                .map_err(|e| schema(format!("domain: {e}")))?,
            (None, Some(ex)) => ex.domain.clone(),
            (None, None) => return Err(schema("scene needs a domain or a built-in group")),
        };
        if let Some(g) = &group {
            if g.dim() != domain.dim() {
                return Err(schema(format!(
                    "group acts in dimension {} but the domain has dimension {}",
                    g.dim(),
                    domain.dim()
                )));
            }
        }
        let mut basepoints = Vec::new();
        for (i, c) in self.basepoints.iter().enumerate() {
            if c.len() != domain.dim() + 1 {
                return Err(schema(format!(
                    "basepoint {i} needs {} coordinates",
                    domain.dim() + 1
                )));
            }
            let p = ProjectivePoint::from_slice(c)
                .map_err(|e| schema(format!("basepoint {i}: {e}")))?;
            if !domain.contains(&p) {
                return Err(schema(format!("basepoint {i} is not interior")));
            }
            basepoints.push(p);
        }
        if let Some(first) = basepoints.first() {
            domain = domain
                .with_basepoint(first.clone())
                .map_err(|e| schema(format!("basepoint: {e}")))?;
        } else {
            basepoints.push(domain.basepoint().clone());
        }
        for (i, p) in self.samples.points.iter().enumerate() {
            if p.len() != domain.dim() || !domain.contains_chart(&DVector::from_column_slice(p)) {
                return Err(schema(format!(
                    "sample point {i} is not an interior chart point"
                )));
            }
        }
        if let CorrespondenceSpec::Relabel { target, zeta0 } = &self.correspondence {
            if group.is_none() {
                return Err(schema("relabel correspondence needs a group"));
            }
            let t = target
                .build()
                .map_err(|e| schema(format!("correspondence target: {e}")))?;
            if zeta0.len() != t.group.dim() + 1 {
                return Err(schema("zeta0 has the wrong length"));
            }
        }
        if !(self.entropy.r2 > self.entropy.r1) {
            return Err(schema("entropy window needs r2 > r1"));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(schema("ball radii must be positive"));
        }
        let scene_hash = digest(&serde_json::to_string(&self).expect("scenes serialize"));
        Ok(Loaded {
            scene: self,
            domain,
            group,
            example,
            basepoints,
            scene_hash,
        })
    }
}

pub fn digest(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Loaded {
    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.scene.seed)
            .ok_or_else(|| schema("a seed is required (scene `seed` or --seed)"))
    }

    pub fn shards(&self, flag: Option<usize>) -> usize {
        flag.or(self.scene.shards).unwrap_or(4).max(1)
    }

    pub fn require_group(&self, what: &str) -> Result<&ProjectiveGroup, CliError> {
        self.group
            .as_ref()
            .ok_or_else(|| schema(format!("{what} needs a group in the scene")))
    }
}
