//! Scene-level assembly of approximant families, correspondences and
//! sample points, shared by suites and experiments.

use hilbert_core::barycenter::NaturalMap;
use hilbert_core::domain::ConvexDomain;
use hilbert_core::hyperbolic::{ideal_from_projective, ideal_point, HyperbolicPoint};
use hilbert_core::measure::{Correspondence, HalfspaceAtInfinity, PsFamily, PsParams};
use hilbert_core::metric::{BoundaryPoint, Provenance};
use hilbert_core::volume::{self, EntropyEstimate, VolumeOptions};
use hilbert_core::{group, metric, rng};
use nalgebra::DVector;

use crate::sampling;
use crate::scene::CorrespondenceSpec;
use crate::{CliError, Context};

/// Random stream ids, one per consumer, so adding a check never reshuffles
/// the inputs of another.
pub mod streams {
    pub const SAMPLE_POINTS: u64 = 100;
    pub const CUSP_POINTS: u64 = 101;
}

pub fn volume_options(ctx: &Context) -> VolumeOptions {
    let mut o = VolumeOptions {
        shards: ctx.shards,
        ..VolumeOptions::default()
    };
    if let Some(b) = ctx.budget {
        o.max_samples = b.max(o.batch * ctx.shards);
        o.min_samples = o.min_samples.min(o.max_samples);
    }
    o
}

/// Critical exponent from the orbit growth of the scene's group.
pub fn poincare_estimate(ctx: &Context) -> Result<EntropyEstimate, CliError> {
    let l = &ctx.loaded;
    let g = l.require_group("the Poincaré series")?;
    Ok(volume::entropy_poincare(
        &l.domain,
        g,
        &l.basepoints[0],
        l.scene.entropy.poincare_r_max,
        ctx.seed,
    )?)
}

/// `h_est`: the scene's value, else the Poincaré estimate.
pub fn entropy_estimate(ctx: &Context) -> Result<f64, CliError> {
    match ctx.loaded.scene.ps.h_est {
        Some(h) => Ok(h),
        None => Ok(poincare_estimate(ctx)?.value),
    }
}

/// Exponents `h_est + δ` over the schedule, largest first.
pub fn exponents(ctx: &Context) -> Result<Vec<f64>, CliError> {
    let h = entropy_estimate(ctx)?;
    let sched = &ctx.loaded.scene.ps.schedule;
    if sched.is_empty() || sched.iter().any(|d| !(*d > 0.0)) {
        return Err(CliError::Schema(
            "ps.schedule needs positive offsets".into(),
        ));
    }
    Ok(sched.iter().map(|d| h + d).collect())
}

/// The finest exponent of the schedule.
pub fn finest_exponent(ctx: &Context) -> Result<f64, CliError> {
    Ok(exponents(ctx)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Approximant family at exponent `s`; `reach` is the largest distance from
/// the basepoint at which it will be evaluated.
pub fn family(ctx: &Context, s: f64, reach: f64) -> Result<PsFamily, CliError> {
    let l = &ctx.loaded;
    let g = l.require_group("a Patterson–Sullivan family")?;
    g.validate_preserves(&l.domain, 64, 3.0, ctx.seed)?;
    let params = PsParams {
        exponent: s,
        r_max: l.scene.ps.r_max,
        truncation: l.scene.ps.truncation,
        reach,
    };
    let words = matches!(l.scene.correspondence, CorrespondenceSpec::Relabel { .. });
    Ok(PsFamily::new(
        &l.domain,
        g,
        &l.basepoints[0],
        params,
        words,
    )?)
}

pub fn correspondence(ctx: &Context, family: &PsFamily) -> Result<Correspondence, CliError> {
    match &ctx.loaded.scene.correspondence {
        CorrespondenceSpec::Identity => {
            if !sampling::is_klein_ball(&ctx.loaded.domain) {
                return Err(CliError::Schema(
                    "the identity correspondence needs the Klein ball as domain".into(),
                ));
            }
            Ok(Correspondence::Identity)
        }
        CorrespondenceSpec::Relabel { target, zeta0 } => {
            let t = target.build()?;
            let z = ideal_point(&DVector::from_column_slice(zeta0));
            Ok(Correspondence::orbit_relabel(family, &t.group, &z)?)
        }
    }
}

/// Builds the map and hands it to `f`; the family outlives the borrow.
pub fn with_natural_map<T>(
    ctx: &Context,
    s: f64,
    reach: f64,
    f: impl FnOnce(&NaturalMap) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let fam = family(ctx, s, reach)?;
    let corr = correspondence(ctx, &fam)?;
    f(&NaturalMap::new(&fam, &corr))
}

/// The scene's explicit sample points, else random points within the
/// sample radius of the basepoint.
pub fn sample_points(ctx: &Context) -> Result<Vec<DVector<f64>>, CliError> {
    let l = &ctx.loaded;
    let spec = &l.scene.samples;
    if !spec.points.is_empty() {
        return Ok(spec
            .points
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect());
    }
    let mut r = rng::stream(ctx.seed, streams::SAMPLE_POINTS);
    Ok(sampling::chart_points(
        &l.domain,
        &l.domain.basepoint_chart(),
        spec.radius,
        spec.count,
        &mut r,
    )?)
}

/// Largest distance from the basepoint among `points`.
pub fn reach(domain: &ConvexDomain, points: &[DVector<f64>]) -> Result<f64, CliError> {
    let o = domain.basepoint_chart();
    let mut r: f64 = 0.0;
    for p in points {
        r = r.max(metric::distance_chart(domain, &o, p)?);
    }
    Ok(r)
}

/// The cusp data of a built-in cusped Klein-ball example: the certified
/// horoball for `epsilon` and the halfspace facing the cusp whose boundary
/// touches it.
pub struct CuspSetup {
    pub basepoint: HyperbolicPoint,
    pub cusp: DVector<f64>,
    pub level: f64,
    pub max_displacement: f64,
    pub halfspace: HalfspaceAtInfinity,
}

pub fn cusp_setup(ctx: &Context, epsilon: f64) -> Result<Option<CuspSetup>, CliError> {
    let l = &ctx.loaded;
    let Some(ex) = &l.example else {
        return Ok(None);
    };
    let Some(cusp) = &ex.cusp else {
        return Ok(None);
    };
    if !sampling::is_klein_ball(&l.domain) || ex.parabolic_generators.is_empty() {
        return Ok(None);
    }
    let o = &l.basepoints[0];
    let theta = BoundaryPoint::new(&l.domain, cusp.clone(), Provenance::Explicit)?;
    let para: Vec<_> = ex
        .parabolic_generators
        .iter()
        .map(|&i| ex.group.generators()[i].clone())
        .collect();
    let found = group::short_loop_horoball(&l.domain, &para, &theta, epsilon, o)?;
    let basepoint = HyperbolicPoint::from_projective(o)?;
    let xi = ideal_from_projective(cusp)?;
    let level = found.horoball.level;
    Ok(Some(CuspSetup {
        halfspace: HalfspaceAtInfinity::facing(&basepoint, &xi, -level)?,
        basepoint,
        cusp: xi,
        level,
        max_displacement: found.max_displacement,
    }))
}
