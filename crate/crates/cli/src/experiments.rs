//! Experiments: each returns a JSON summary, a CSV table and a count of
//! failed checks (nonzero exit).

use hilbert_core::barycenter::{
    halfspace_control_d, homotopy_track, jacobian_check, DepthProbe, HomotopyOptions,
};
use hilbert_core::eccentricity::eccentricity;
use hilbert_core::hyperbolic::{self, HyperbolicPoint};
use hilbert_core::quadrature::sphere_area;
use hilbert_core::volume::{self, EntropyEstimate};
use hilbert_core::{rng, GeometryError};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::natural::{self, streams};
use crate::report::{cell, coords_cell, opt_cell, Table};
use crate::sampling;
use crate::scene::CorrespondenceSpec;
use crate::{CliError, Context, Experiment};

/// Standard errors used for the two-sided checks of the rigidity ratio.
const Z: f64 = 2.0;

pub struct Artifact {
    pub summary: Value,
    pub table: Table,
    pub headline: String,
    pub failed_checks: usize,
}

pub fn run(ctx: &Context, name: Experiment) -> Result<Artifact, CliError> {
    match name {
        Experiment::Entropy => entropy(ctx),
        Experiment::Volume => volume_experiment(ctx),
        Experiment::NaturalMap => natural_map(ctx),
        Experiment::Homotopy => homotopy(ctx),
        Experiment::JacobianBound => jacobian_bound(ctx),
        Experiment::RigidityRatio => rigidity_ratio(ctx),
    }
}

fn estimate_json(e: &EntropyEstimate) -> Value {
    json!({
        "method": e.method.as_str(),
        "value": e.value,
        "standard_error": e.standard_error,
        "window": [e.window.0, e.window.1],
    })
}

fn entropy(ctx: &Context) -> Result<Artifact, CliError> {
    let l = &ctx.loaded;
    let spec = &l.scene.entropy;
    let mut estimates = vec![volume::entropy_ball_growth_with(
        &l.domain,
        &l.basepoints[0],
        spec.r1,
        spec.r2,
        ctx.seed,
        &natural::volume_options(ctx),
    )?];
    if l.group.is_some() {
        estimates.push(natural::poincare_estimate(ctx)?);
    }
    let mut table = Table::new(&[
        "method",
        "estimate",
        "standard_error",
        "radius",
        "amount",
        "amount_error",
    ]);
    for e in &estimates {
        for p in &e.profile {
            table.push(vec![
                e.method.as_str().into(),
                cell(e.value),
                cell(e.standard_error),
                cell(p.radius),
                cell(p.amount),
                cell(p.standard_error),
            ]);
        }
    }
    let headline = estimates
        .iter()
        .map(|e| {
            format!(
                "{}: {:.4} ± {:.4}",
                e.method.as_str(),
                e.value,
                e.standard_error
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Artifact {
        summary: json!({
            "dimension": l.domain.dim(),
            "hyperbolic_reference": l.domain.dim() as f64 - 1.0,
            "estimates": estimates.iter().map(estimate_json).collect::<Vec<_>>(),
        }),
        table,
        headline,
        failed_checks: 0,
    })
}

/// Hyperbolic ball volume of radius `r` in dimension 2 or 3.
fn hyperbolic_ball(n: usize, r: f64) -> Option<f64> {
    match n {
        2 => Some(2.0 * std::f64::consts::PI * (r.cosh() - 1.0)),
        3 => Some(std::f64::consts::PI * ((2.0 * r).sinh() - 2.0 * r)),
        _ => None,
    }
}

fn volume_experiment(ctx: &Context) -> Result<Artifact, CliError> {
    let l = &ctx.loaded;
    let d = &l.domain;
    let o = &l.basepoints[0];
    let options = natural::volume_options(ctx);
    let radii = if l.scene.radii.is_empty() {
        vec![1.0, 2.0, 3.0]
    } else {
        l.scene.radii.clone()
    };
    let density = volume::volume_density(d, o)?;
    let reference = sampling::is_klein_ball(d);
    let mut table = Table::new(&[
        "quantity",
        "radius",
        "estimate",
        "standard_error",
        "samples",
        "reference",
    ]);
    table.push(vec![
        "density_at_basepoint".into(),
        String::new(),
        cell(density.value),
        String::new(),
        density.nodes.to_string(),
        if reference { cell(1.0) } else { String::new() },
    ]);
    let mut balls = Vec::new();
    for &r in &radii {
        let v = volume::ball_volume_with(d, o, r, ctx.seed, &options)?;
        let exact = if reference {
            hyperbolic_ball(d.dim(), r)
        } else {
            None
        };
        table.push(vec![
            "ball".into(),
            cell(r),
            cell(v.estimate),
            cell(v.standard_error),
            v.samples.to_string(),
            opt_cell(exact),
        ]);
        balls.push(
            json!({ "radius": r, "estimate": v.estimate, "standard_error": v.standard_error,
            "samples": v.samples, "reference": exact }),
        );
    }
    // A cusped quotient has a non-compact Dirichlet domain; that is reported,
    // not fatal.
    let (dirichlet, dirichlet_error) = match &l.group {
        Some(g) => match volume::dirichlet_volume(d, g, o, ctx.seed, &options) {
            Ok(v) => {
                table.push(vec![
                    "dirichlet_domain".into(),
                    String::new(),
                    cell(v.estimate),
                    cell(v.standard_error),
                    v.samples.to_string(),
                    String::new(),
                ]);
                (Some(v), None)
            }
            Err(e @ GeometryError::Unsupported(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        },
        None => (None, None),
    };
    Ok(Artifact {
        headline: format!(
            "density {:.6}; {} balls{}",
            density.value,
            radii.len(),
            dirichlet
                .as_ref()
                .map(|v| format!(
                    "; Dirichlet domain {:.5} ± {:.5}",
                    v.estimate, v.standard_error
                ))
                .unwrap_or_default()
        ),
        summary: json!({
            "density_at_basepoint": density,
            "balls": balls,
            "dirichlet_domain": dirichlet,
            "dirichlet_domain_error": dirichlet_error,
            "volume_options": options,
        }),
        table,
        failed_checks: 0,
    })
}

fn natural_map(ctx: &Context) -> Result<Artifact, CliError> {
    let l = &ctx.loaded;
    let d = &l.domain;
    let points = natural::sample_points(ctx)?;
    let reach = natural::reach(d, &points)?;
    let identity = matches!(l.scene.correspondence, CorrespondenceSpec::Identity);
    let mut table = Table::new(&[
        "exponent",
        "point",
        "chart",
        "image",
        "gradient_norm",
        "iterations",
        "atoms",
        "identity_error",
    ]);
    let mut images: Vec<Vec<HyperbolicPoint>> = Vec::new();
    let mut per_exponent = Vec::new();
    for s in natural::exponents(ctx)? {
        let values = natural::with_natural_map(ctx, s, reach, |phi| {
            Ok(points
                .par_iter()
                .map(|x| phi.eval(&d.from_chart(x)))
                .collect::<Result<Vec<_>, GeometryError>>()?)
        })?;
        let mut worst: f64 = 0.0;
        for (k, (x, v)) in points.iter().zip(&values).enumerate() {
            let err = if identity {
                Some(hyperbolic::distance(
                    &v.point,
                    &HyperbolicPoint::from_klein(x)?,
                ))
            } else {
                None
            };
            worst = worst.max(err.unwrap_or(0.0));
            table.push(vec![
                cell(s),
                k.to_string(),
                coords_cell(x.as_slice()),
                coords_cell(v.point.to_klein().as_slice()),
                cell(v.barycenter.gradient_norm),
                v.barycenter.iterations.to_string(),
                v.atoms.to_string(),
                opt_cell(err),
            ]);
        }
        per_exponent.push(json!({
            "exponent": s,
            "max_identity_error": if identity { Some(worst) } else { None },
        }));
        images.push(values.into_iter().map(|v| v.point).collect());
    }
    // Largest move of Φ(x) between consecutive exponents of the schedule.
    let stability = images
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| hyperbolic::distance(a, b))
                .fold(0.0, f64::max)
        })
        .collect::<Vec<_>>();
    Ok(Artifact {
        headline: format!(
            "natural map at {} points over {} exponents; schedule stability {:?}",
            points.len(),
            images.len(),
            stability
        ),
        summary: json!({
            "r_max": l.scene.ps.r_max,
            "truncation": l.scene.ps.truncation,
            "correspondence": l.scene.correspondence,
            "exponents": per_exponent,
            "schedule_stability": stability,
        }),
        table,
        failed_checks: 0,
    })
}

fn homotopy(ctx: &Context) -> Result<Artifact, CliError> {
    let l = &ctx.loaded;
    let d = &l.domain;
    let spec = &l.scene.homotopy;
    if !matches!(l.scene.correspondence, CorrespondenceSpec::Identity)
        || !sampling::is_klein_ball(d)
    {
        return Err(CliError::Schema(
            "homotopy tracks need the Klein ball with the identity correspondence".into(),
        ));
    }
    if spec.steps < 2 {
        return Err(CliError::Schema("homotopy.steps must be at least 2".into()));
    }
    let grid: Vec<f64> = (0..spec.steps)
        .map(|k| k as f64 / (spec.steps - 1) as f64)
        .collect();
    let cusp = natural::cusp_setup(ctx, 0.2)?;
    let points: Vec<HyperbolicPoint> = match (&cusp, &l.example) {
        (Some(_), Some(ex)) => {
            let mut r = rng::stream(ctx.seed, streams::CUSP_POINTS);
            let mut pts = Vec::new();
            for &depth in &spec.depths {
                pts.extend(sampling::cusp_points(
                    ex,
                    &l.basepoints[0],
                    depth,
                    l.scene.samples.count,
                    l.scene.samples.radius,
                    &mut r,
                )?);
            }
            pts
        }
        _ => natural::sample_points(ctx)?
            .iter()
            .map(HyperbolicPoint::from_klein)
            .collect::<Result<_, _>>()?,
    };
    let s = natural::finest_exponent(ctx)?;
    let reach = points
        .iter()
        .map(|p| {
            hyperbolic::distance(
                p,
                &HyperbolicPoint::from_projective(&l.basepoints[0]).expect("interior"),
            )
        })
        .fold(0.0, f64::max);
    let dist_d = halfspace_control_d(d.dim())?;
    let mut seeds = rng::stream(ctx.seed, 102);
    let track_seeds: Vec<u64> = points.iter().map(|_| seeds.random()).collect();
    let tracks = natural::with_natural_map(ctx, s, reach, |phi| {
        points
            .iter()
            .zip(&track_seeds)
            .map(|(y, &seed)| {
                let x = y.to_projective();
                let pushed = phi.pushed_measure(&x)?;
                let options = HomotopyOptions {
                    visual_atoms: ctx.visual_atoms(),
                    seed,
                    bar: phi.options,
                    probe: cusp.as_ref().map(|c| DepthProbe {
                        reference: c.basepoint.clone(),
                        cusp: c.cusp.clone(),
                    }),
                };
                let (track, pts) = homotopy_track(&pushed, y, &grid, &options)?;
                let phi_x = phi.eval(&x)?.point;
                Ok((track, pts, phi_x))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut table = Table::new(&[
        "track",
        "t",
        "chart",
        "busemann_depth",
        "iterations",
        "halfspace_distance",
    ]);
    let mut summaries = Vec::new();
    let mut failed = 0;
    for (k, ((track, pts, phi_x), y)) in tracks.iter().zip(&points).enumerate() {
        let start_error = hyperbolic::distance(&pts[0], y);
        let end_exact = pts
            .last()
            .map(|p| p.coords() == phi_x.coords())
            .unwrap_or(false);
        let worst = cusp.as_ref().map(|c| {
            pts.iter()
                .map(|p| c.halfspace.distance(p))
                .fold(0.0, f64::max)
        });
        let enclosed = worst.map(|w| w <= dist_d);
        failed += usize::from(start_error > 0.05)
            + usize::from(!end_exact)
            + usize::from(enclosed == Some(false));
        for (sample, p) in track.samples.iter().zip(pts) {
            table.push(vec![
                k.to_string(),
                cell(sample.t),
                coords_cell(&sample.chart),
                opt_cell(sample.busemann_depth),
                sample.iterations.to_string(),
                opt_cell(cusp.as_ref().map(|c| c.halfspace.distance(p))),
            ]);
        }
        summaries.push(json!({
            "track": k,
            "start": y.to_klein().as_slice(),
            "start_error": start_error,
            "end_equals_natural_map": end_exact,
            "continuity": track.continuity,
            "max_depth": track.max_depth,
            "worst_halfspace_distance": worst,
            "enclosed": enclosed,
        }));
    }
    Ok(Artifact {
        headline: format!(
            "{} homotopy tracks, {} failed checks (D = {:.6})",
            tracks.len(),
            failed,
            dist_d
        ),
        summary: json!({
            "exponent": s,
            "r_max": l.scene.ps.r_max,
            "t_grid": grid,
            "control_distance": dist_d,
            "cusp_level": cusp.as_ref().map(|c| c.level),
            "tracks": summaries,
        }),
        table,
        failed_checks: failed,
    })
}

fn jacobian_bound(ctx: &Context) -> Result<Artifact, CliError> {
    let l = &ctx.loaded;
    let d = &l.domain;
    let n = d.dim();
    let spec = &l.scene.jacobian;
    let points = natural::sample_points(ctx)?;
    let s = natural::finest_exponent(ctx)?;
    let h_source = spec.h_source.unwrap_or(s);
    let h_target = n as f64 - 1.0;
    let n_bound = match spec.n_bound {
        Some(b) => b,
        None => eccentricity(d, &points)?.max_n,
    };
    let reach = natural::reach(d, &points)? + 0.01;
    let reports = natural::with_natural_map(ctx, s, reach, |phi| {
        Ok(points
            .par_iter()
            .map(|x| jacobian_check(phi, x, h_source, h_target, n_bound, spec.step))
            .collect::<Vec<_>>())
    })?;
    let mut table = Table::new(&[
        "point",
        "chart",
        "image",
        "jacobian",
        "error",
        "bound",
        "bound_ratio",
        "violation",
        "status",
    ]);
    let (mut violations, mut unresolved, mut worst_ratio) = (0, 0, 0.0f64);
    let mut rows = Vec::new();
    for (k, (x, r)) in points.iter().zip(&reports).enumerate() {
        match r {
            Ok(rep) => {
                violations += usize::from(rep.violation);
                worst_ratio = worst_ratio.max(rep.bound_ratio);
                table.push(vec![
                    k.to_string(),
                    coords_cell(&rep.chart),
                    coords_cell(&rep.image_chart),
                    cell(rep.jacobian),
                    cell(rep.error),
                    cell(rep.bound),
                    cell(rep.bound_ratio),
                    rep.violation.to_string(),
                    "ok".into(),
                ]);
                rows.push(json!(rep));
            }
            Err(e) => {
                unresolved += 1;
                let blank = String::new;
                table.push(vec![
                    k.to_string(),
                    coords_cell(x.as_slice()),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    e.to_string(),
                ]);
                rows.push(json!({ "chart": x.as_slice(), "error": e.to_string() }));
            }
        }
    }
    Ok(Artifact {
        headline: format!(
            "{} points: {violations} violations, {unresolved} unresolved, largest bound ratio {worst_ratio:.4}",
            points.len()
        ),
        summary: json!({
            "exponent": s,
            "h_source": h_source,
            "h_target": h_target,
            "n_bound": n_bound,
            "step": spec.step,
            "violations": violations,
            "unresolved": unresolved,
            "largest_bound_ratio": worst_ratio,
            "reports": rows,
        }),
        table,
        failed_checks: violations,
    })
}

fn rigidity_ratio(ctx: &Context) -> Result<Artifact, CliError> {
    let l = &ctx.loaded;
    let d = &l.domain;
    let n = d.dim();
    let g = l.require_group("the rigidity ratio")?;
    let options = natural::volume_options(ctx);
    let h = natural::poincare_estimate(ctx)?;
    let points = natural::sample_points(ctx)?;
    let ecc = eccentricity(d, &points)?;
    let vol = volume::dirichlet_volume(d, g, &l.basepoints[0], ctx.seed, &options)?;
    let reference = match &l.scene.correspondence {
        CorrespondenceSpec::Identity => vol.clone(),
        CorrespondenceSpec::Relabel { target, .. } => {
            let t = target.build()?;
            volume::dirichlet_volume(
                &t.domain,
                &t.group,
                t.domain.basepoint(),
                ctx.seed,
                &options,
            )?
        }
    };
    let nf = n as f64;
    let left = ecc.max_n * h.value.powi(n as i32) * vol.estimate;
    let left_rel = (nf * h.standard_error / h.value).hypot(vol.standard_error / vol.estimate);
    let right = (nf - 1.0).powi(n as i32) * reference.estimate;
    let right_rel = reference.standard_error / reference.estimate;
    let ratio = left / right;
    let ratio_error = ratio * left_rel.hypot(right_rel);
    let holds = ratio + Z * ratio_error >= 1.0;
    let equality = (ratio - 1.0).abs() <= Z * ratio_error;
    let mut table = Table::new(&["quantity", "value", "standard_error"]);
    for (q, v, e) in [
        ("entropy", h.value, h.standard_error),
        ("eccentricity_max", ecc.max_n, 0.0),
        ("volume", vol.estimate, vol.standard_error),
        (
            "reference_volume",
            reference.estimate,
            reference.standard_error,
        ),
        ("left", left, left * left_rel),
        ("right", right, right * right_rel),
        ("ratio", ratio, ratio_error),
    ] {
        table.push(vec![q.into(), cell(v), cell(e)]);
    }
    Ok(Artifact {
        headline: format!(
            "N·hⁿ·Vol = {left:.5}, (n−1)ⁿ·Vol₀ = {right:.5}, ratio {ratio:.4} ± {ratio_error:.4}"
        ),
        summary: json!({
            "entropy": estimate_json(&h),
            "eccentricity": { "max": ecc.max_n, "min": ecc.min_n, "max_k": ecc.max_k, "points": points.len() },
            "volume": vol,
            "reference_volume": reference,
            "left": left,
            "left_relative_error": left_rel,
            "right": right,
            "right_relative_error": right_rel,
            "ratio": ratio,
            "ratio_error": ratio_error,
            "z": Z,
            "inequality_consistent": holds,
            "equality_within_error": equality,
            "unit_sphere_area": sphere_area(n),
        }),
        table,
        failed_checks: usize::from(!holds),
    })
}
