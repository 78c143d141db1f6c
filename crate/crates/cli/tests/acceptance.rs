//! End-to-end acceptance checks. Each test prints one PASS/FAIL line and then
//! asserts, so `cargo test` both reports and enforces the verdict.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hilbert_core::barycenter::{bar, halfspace_control_d, jacobian_check, NaturalMap};
use hilbert_core::domain::ConvexDomain;
use hilbert_core::eccentricity::eccentricity;
use hilbert_core::group::builtin::{
    modular_lattice, parabolic_cyclic, parabolic_rank2, BuiltinGroup,
};
use hilbert_core::group::short_loop_horoball;
use hilbert_core::hyperbolic::{self, busemann_hyperbolic, ideal_from_projective, HyperbolicPoint};
use hilbert_core::measure::{
    visual_measure, visual_measure_with, Correspondence, DirectionSampling, PsFamily, PsParams,
};
use hilbert_core::metric::{self, BoundaryPoint, Provenance};
use hilbert_core::{rng, volume};
use hilbert_lab::experiments::{self, Artifact};
use hilbert_lab::sampling::{chart_points, chord_end, hyperbolic_point};
use hilbert_lab::suites::{self, InvariantResult};
use hilbert_lab::{Context, Experiment, RunArgs, Scene, Suite};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use serde_json::Value;

fn verdict(id: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {id:02} {name}: {} ({})",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    // Written to the raw handle so the line shows even under output capture.
    writeln!(std::io::stdout().lock(), "{line}").unwrap();
    assert!(pass, "{line}");
}

fn scene_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenes")
        .join(name)
}

fn context(name: &str) -> Context {
    let path = scene_path(name);
    let args = RunArgs {
        scene: path.clone(),
        out: None,
        seed: None,
        shards: None,
        budget: None,
    };
    Context::from_scene(Scene::from_path(&path).unwrap(), &args).unwrap()
}

fn row<'a>(results: &'a [InvariantResult], name: &str) -> &'a InvariantResult {
    results
        .iter()
        .find(|r| r.invariant == name)
        .unwrap_or_else(|| panic!("no {name} row"))
}

fn run_experiment(ctx: &Context, name: Experiment) -> Artifact {
    experiments::run(ctx, name).unwrap()
}

fn klein_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(n + 1, n + 1);
    j[(0, 0)] = -1.0;
    j
}

/// A non-round ellipsoid `Q = AᵀJA` with `A` a small random perturbation of
/// the identity.
fn random_ellipsoid<R: Rng>(r: &mut R, n: usize) -> (ConvexDomain, DMatrix<f64>) {
    let a = DMatrix::identity(n + 1, n + 1)
        + DMatrix::from_fn(n + 1, n + 1, |_, _| 0.15 * r.random_range(-1.0..1.0));
    let q = a.transpose() * klein_form(n) * &a;
    (ConvexDomain::ellipsoid(q.clone()).unwrap(), q)
}

fn p_ball(n: usize) -> ConvexDomain {
    ConvexDomain::p_norm_ball(4.0, DMatrix::identity(n + 1, n + 1)).unwrap()
}

fn deformed_hull() -> ConvexDomain {
    BuiltinGroup::CoxeterDeformation {
        p: 4,
        q: 4,
        r: 4,
        t: 0.4,
        depth: 18,
    }
    .build()
    .unwrap()
    .domain
}

fn q_dot(q: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * q * b)[(0, 0)]
}

/// Hyperboloid distance in the model `{XᵀQX < 0}`: for lifts with
/// `XᵀQX = YᵀQY = −1` on the same sheet, `|X − Y|_Q² = 4 sinh²(d/2)`.
fn oracle_distance(q: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let x = x / (-q_dot(q, x, x)).sqrt();
    let mut y = y / (-q_dot(q, y, y)).sqrt();
    if q_dot(q, &x, &y) > 0.0 {
        y = -y;
    }
    let diff = &x - &y;
    2.0 * (0.5 * q_dot(q, &diff, &diff).max(0.0).sqrt()).asinh()
}

/// Horofunction of the same model: `log(⟨Y, Ξ⟩ / ⟨O, Ξ⟩)` for normalized lifts.
fn oracle_busemann(q: &DMatrix<f64>, o: &DVector<f64>, xi: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let o = o / (-q_dot(q, o, o)).sqrt();
    let y = y / (-q_dot(q, y, y)).sqrt();
    (q_dot(q, &y, xi) / q_dot(q, &o, xi)).ln()
}

#[test]
fn c01_ellipsoid_distance_matches_closed_form() {
    let mut r = rng::stream(101, 0);
    let start = Instant::now();
    let (mut worst, mut pairs) = (0.0f64, 0);
    for n in [2, 3] {
        for _ in 0..10 {
            let (d, q) = random_ellipsoid(&mut r, n);
            let o = d.basepoint_chart();
            let xs = chart_points(&d, &o, 4.0, 500, &mut r).unwrap();
            let ys = chart_points(&d, &o, 4.0, 500, &mut r).unwrap();
            for (x, y) in xs.iter().zip(&ys) {
                let got = metric::distance_chart(&d, x, y).unwrap();
                let want = oracle_distance(&q, &d.chart().lift(x), &d.chart().lift(y));
                worst = worst.max((got - want).abs() / want);
                pairs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "ellipsoid_distance_closed_form",
        pairs >= 10_000 && worst <= 1e-9 && secs < 10.0,
        format!("{pairs} pairs, worst relative error {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn c02_finsler_norm_matches_distance_derivative() {
    let mut r = rng::stream(102, 0);
    let start = Instant::now();
    let domains = [
        ("ellipsoid", random_ellipsoid(&mut r, 3).0),
        ("p_ball", p_ball(2)),
        ("orbit_hull", deformed_hull()),
    ];
    let (mut worst, mut pairs) = (0.0f64, 0);
    for (_, d) in &domains {
        let xs = chart_points(d, &d.basepoint_chart(), 3.0, 334, &mut r).unwrap();
        for x in &xs {
            let v = rng::unit_vector(&mut r, d.dim());
            let f = metric::finsler_norm_chart(d, x, &v).unwrap();
            // d(x, x + hv)/h is F + O(h); Richardson over h, h/2, h/4.
            let h = 1e-3 / f;
            let q = |h: f64| metric::distance_chart(d, x, &(x + &v * h)).unwrap() / h;
            let (q1, q2, q4) = (q(h), q(0.5 * h), q(0.25 * h));
            let derivative = (4.0 * (2.0 * q4 - q2) - (2.0 * q2 - q1)) / 3.0;
            worst = worst.max((derivative - f).abs() / f);
            pairs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "finsler_norm_derivative",
        pairs >= 1000 && worst <= 1e-6 && secs < 30.0,
        format!("{pairs} (x, v) pairs over ellipsoid, p-ball and orbit hull, worst relative error {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn c03_busemann_checks() {
    let mut r = rng::stream(103, 0);
    let (e2, q2) = random_ellipsoid(&mut r, 2);
    let domains = [
        ("ellipsoid", e2.clone()),
        ("p_ball", p_ball(3)),
        ("orbit_hull", deformed_hull()),
    ];

    let mut zero = true;
    let (mut lipschitz_pairs, mut lipschitz_bad, mut nonconvergent) = (0, 0, 0);
    for (k, (_, d)) in domains.iter().enumerate() {
        let o = d.basepoint_chart();
        let count = [4000, 3000, 3000][k];
        let ys = chart_points(d, &o, 3.0, count, &mut r).unwrap();
        let zs = chart_points(d, &o, 3.0, count, &mut r).unwrap();
        for (y, z) in ys.iter().zip(&zs) {
            let xi = chord_end(d, &o, &rng::unit_vector(&mut r, d.dim())).unwrap();
            let at_o = metric::busemann_chart(d, &o, &xi, &o).unwrap().value;
            zero &= at_o == 0.0;
            let (by, bz) = match (
                metric::busemann_chart(d, &o, &xi, y),
                metric::busemann_chart(d, &o, &xi, z),
            ) {
                (Ok(a), Ok(b)) => (a.value, b.value),
                _ => {
                    nonconvergent += 1;
                    continue;
                }
            };
            lipschitz_pairs += 1;
            if (by - bz).abs() > metric::distance_chart(d, y, z).unwrap() + 1e-8 {
                lipschitz_bad += 1;
            }
        }
    }

    let o = e2.basepoint_chart();
    let mut worst_closed: f64 = 0.0;
    for y in chart_points(&e2, &o, 3.0, 1000, &mut r).unwrap() {
        let xi = chord_end(&e2, &o, &rng::unit_vector(&mut r, 2)).unwrap();
        let got = metric::busemann_chart(&e2, &o, &xi, &y).unwrap().value;
        let c = e2.chart();
        let want = oracle_busemann(&q2, &c.lift(&o), &c.lift(&xi), &c.lift(&y));
        worst_closed = worst_closed.max((got - want).abs());
    }
    verdict(
        3,
        "busemann_checks",
        zero && lipschitz_pairs >= 10_000 && lipschitz_bad == 0 && nonconvergent == 0 && worst_closed <= 1e-6,
        format!(
            "B(o) = 0 exactly: {zero}; {lipschitz_bad} Lipschitz violations in {lipschitz_pairs} pairs \
             ({nonconvergent} non-convergent); closed-form error {worst_closed:.2e}"
        ),
    );
}

fn estimate(summary: &Value, method: &str) -> (f64, f64) {
    let e = summary["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["method"] == method)
        .unwrap_or_else(|| panic!("no {method} estimate"));
    (
        e["value"].as_f64().unwrap(),
        e["standard_error"].as_f64().unwrap(),
    )
}

#[test]
fn c04_entropy_of_ellipsoids() {
    let start = Instant::now();
    let two = run_experiment(&context("ellipsoid-2d.json"), Experiment::Entropy);
    let t2 = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let three = run_experiment(&context("ellipsoid-3d.json"), Experiment::Entropy);
    let t3 = start.elapsed().as_secs_f64();
    let (growth2, _) = estimate(&two.summary, "ball_growth");
    let (poincare2, _) = estimate(&two.summary, "poincare_series");
    let (growth3, _) = estimate(&three.summary, "ball_growth");
    verdict(
        4,
        "ellipsoid_entropy",
        (growth2 - 1.0).abs() <= 0.1
            && (poincare2 - 1.0).abs() <= 0.1
            && (growth3 - 2.0).abs() <= 0.15
            && t2 < 600.0
            && t3 < 600.0,
        format!(
            "n=2 ball growth {growth2:.4}, Poincaré {poincare2:.4} ({t2:.1}s); n=3 ball growth {growth3:.4} ({t3:.1}s)"
        ),
    );
}

#[test]
fn c05_parabolic_poincare_exponent() {
    let ex = parabolic_cyclic().unwrap();
    let o = ex.domain.basepoint().clone();
    let radii = [10.0, 11.0, 12.0, 13.0, 14.0];
    let estimates: Vec<_> = radii
        .iter()
        .map(|&r| volume::entropy_poincare(&ex.domain, &ex.group, &o, r, 5).unwrap())
        .collect();
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    // Non-increasing up to the reported standard error of the later estimate.
    let decreasing = estimates
        .windows(2)
        .all(|w| w[1].value <= w[0].value + w[1].standard_error);
    let floor = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let last = estimates.last().unwrap();
    verdict(
        5,
        "parabolic_poincare_exponent",
        decreasing && floor >= 0.45 && (last.value - 0.5).abs() <= 2.0 * last.standard_error,
        format!(
            "estimates at R_max {radii:?}: {values:.4?}, last ± {:.4}",
            last.standard_error
        ),
    );
}

#[test]
fn c06_deformed_entropy_bound() {
    let ctx = context("deformed.json");
    let depth = match &ctx.loaded.scene.group {
        Some(hilbert_lab::scene::GroupSpec::Builtin(BuiltinGroup::CoxeterDeformation {
            depth,
            ..
        })) => *depth,
        _ => 0,
    };
    let art = run_experiment(&ctx, Experiment::Entropy);
    let (h, err) = estimate(&art.summary, "poincare_series");
    verdict(
        6,
        "deformed_entropy_bound",
        depth >= 8 && h <= 1.0 + err,
        format!("hull depth {depth}, Poincaré estimate {h:.4} ± {err:.4}"),
    );
}

#[test]
fn c07_visual_barycenter() {
    let mut r = rng::stream(107, 0);
    let mut worst: f64 = 0.0;
    let mut points = Vec::new();
    for n in [2, 3] {
        for _ in 0..100 {
            let y = hyperbolic_point(&mut r, n, 3.0);
            let seed: u64 = r.random();
            let b = bar(&visual_measure(&y, 4096, seed).unwrap()).unwrap();
            worst = worst.max(hyperbolic::distance(&b.point, &y));
            points.push(y);
        }
    }
    // Independent directions: the error should scale like N^{-1/2}.
    let sizes = [1024usize, 4096, 16384];
    let probes: Vec<&HyperbolicPoint> = points.iter().step_by(5).collect();
    let mean_error: Vec<f64> = sizes
        .iter()
        .map(|&atoms| {
            probes
                .iter()
                .enumerate()
                .map(|(k, y)| {
                    let m = visual_measure_with(
                        y,
                        atoms,
                        7000 + k as u64,
                        DirectionSampling::Independent,
                    )
                    .unwrap();
                    hyperbolic::distance(&bar(&m).unwrap().point, y)
                })
                .sum::<f64>()
                / probes.len() as f64
        })
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = mean_error.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let shrinking = mean_error.windows(2).all(|w| w[1] < w[0]);
    verdict(
        7,
        "visual_barycenter",
        worst <= 0.05 && shrinking && (slope + 0.5).abs() <= 0.15,
        format!(
            "worst error {worst:.2e} over {} points at N=4096; mean error {} at N={sizes:?}, log-log slope {slope:.3}",
            points.len(),
            mean_error.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" / ")
        ),
    );
}

#[test]
fn c08_halfspace_control_constant() {
    // A halfspace at distance d subtends the half-angle θ with cos θ = tanh d,
    // so the ½-cosine condition holds from d = atanh(½) on.
    let oracle = 0.5f64.atanh();
    let mut ok = true;
    let mut detail = Vec::new();
    for (n, scene) in [(2, "ellipsoid-2d.json"), (3, "ellipsoid-3d.json")] {
        let d = halfspace_control_d(n).unwrap();
        let ctx = context(scene);
        let out = suites::verify(&ctx, Suite::Barycenter).unwrap();
        let angle = row(&out.results, "halfspace_control_angle");
        let measures = row(&out.results, "halfspace_control_barycenter");
        ok &= (d - oracle).abs() <= 1e-12
            && angle.trials >= 10_000
            && angle.violations == 0
            && measures.trials >= 1000
            && measures.violations == 0;
        detail.push(format!(
            "n={n}: D = {d:.6}, {}/{} angle violations, {}/{} measure violations",
            angle.violations, angle.trials, measures.violations, measures.trials
        ));
    }
    verdict(8, "halfspace_control_constant", ok, detail.join("; "));
}

#[test]
fn c09_cusped_lattice_measures() {
    let ctx = context("modular.json");
    let measures = suites::verify(&ctx, Suite::Measures).unwrap();
    let cusp = suites::verify(&ctx, Suite::Cusp).unwrap();
    let band = row(&measures.results, "ps_transformation_band");
    let coverage = row(&measures.results, "ps_transformation_band_coverage");
    let visual = row(&cusp.results, "visual_two_thirds");
    let ps = row(&cusp.results, "ps_two_thirds");
    verdict(
        9,
        "cusped_lattice_measures",
        band.trials >= 100
            && band.violations == 0
            && coverage.violations == 0
            && visual.trials > 0
            && visual.violations == 0
            && ps.trials > 0
            && ps.violations == 0,
        format!(
            "band: {}; visual ⅔: {}/{} violations; PS ⅔: {}/{} violations",
            band.note, visual.violations, visual.trials, ps.violations, ps.trials
        ),
    );
}

#[test]
fn c10_short_loop_horoballs() {
    let mut r = rng::stream(110, 0);
    let examples = [
        ("parabolic_cyclic", parabolic_cyclic().unwrap()),
        ("parabolic_rank2", parabolic_rank2().unwrap()),
        ("modular", modular_lattice().unwrap()),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, ex) in &examples {
        let d = &ex.domain;
        let o = d.basepoint().clone();
        let cusp = ex.cusp.clone().unwrap();
        let theta = BoundaryPoint::new(d, cusp.clone(), Provenance::Explicit).unwrap();
        let para: Vec<_> = ex
            .parabolic_generators
            .iter()
            .map(|&i| ex.group.generators()[i].clone())
            .collect();
        let oh = HyperbolicPoint::from_projective(&o).unwrap();
        let xi = ideal_from_projective(&cusp).unwrap();
        for eps in [0.2, 0.1, 0.05] {
            let found = match short_loop_horoball(d, &para, &theta, eps, &o) {
                Ok(f) => f,
                Err(e) => {
                    ok = false;
                    detail.push(format!("{name} ε={eps}: {e}"));
                    continue;
                }
            };
            // Fresh points inside the horoball, spread sideways, checked with
            // the Hilbert distance.
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let z = oh.exp(&hilbert_lab::sampling::lift_at(
                    &oh,
                    &rng::unit_vector(&mut r, d.dim()),
                    r.random_range(0.0..3.0),
                ));
                let depth = -found.horoball.level + r.random_range(1e-3..2.0);
                let y = z.towards(&xi, depth + busemann_hyperbolic(&oh, &xi, &z));
                let yp = y.to_projective();
                if !found.horoball.contains(d, &yp).unwrap() {
                    continue;
                }
                for g in &para {
                    for h in [g.clone(), g.inverse()] {
                        worst = worst.max(metric::hilbert_distance(d, &yp, &h.apply(&yp)).unwrap());
                    }
                }
            }
            ok &= worst < eps && found.max_displacement < eps;
            detail.push(format!(
                "{name} ε={eps}: level {:.3}, worst {worst:.4}",
                found.horoball.level
            ));
        }
    }
    verdict(10, "short_loop_horoballs", ok, detail.join("; "));
}

/// Vertex of the fundamental triangle where the mirrors of the first two
/// reflections meet: each mirror is `J`-orthogonal to the reflection's
/// (−1)-eigenvector.
fn chamber_vertex(group: &hilbert_core::group::ProjectiveGroup) -> DVector<f64> {
    let pole = |k: usize| {
        let m = group.generators()[k].matrix() + DMatrix::identity(3, 3);
        let svd = m.svd(false, true);
        let v_t = svd.v_t.unwrap();
        let i = svd.singular_values.imin();
        Vector3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)])
    };
    let c = pole(0).cross(&pole(1));
    let v = Vector3::new(-c[0], c[1], c[2]);
    DVector::from_vec(vec![v[1] / v[0], v[2] / v[0]])
}

#[test]
fn c11_jacobian() {
    let start = Instant::now();
    let ex = BuiltinGroup::Triangle { p: 4, q: 4, r: 4 }.build().unwrap();
    let x = chamber_vertex(&ex.group);
    let s = 1.0 + 0.05;
    let mut jacobians = Vec::new();
    for r_max in [8.0, 10.0, 12.0] {
        let fam = PsFamily::new(
            &ex.domain,
            &ex.group,
            ex.domain.basepoint(),
            PsParams::new(s, r_max),
            false,
        )
        .unwrap();
        let phi = NaturalMap::new(&fam, &Correspondence::Identity);
        jacobians.push(
            jacobian_check(&phi, &x, s, 1.0, 1.0, 1e-3)
                .unwrap()
                .jacobian,
        );
    }
    let gaps: Vec<f64> = jacobians.iter().map(|j| (j - 1.0).abs()).collect();
    let identity_ok = gaps[2] <= 0.15 && gaps.windows(2).all(|w| w[1] < w[0]);

    let art = run_experiment(&context("deformed.json"), Experiment::JacobianBound);
    let points = art.summary["reports"].as_array().unwrap().len();
    let violations = art.summary["violations"].as_u64().unwrap();
    let unresolved = art.summary["unresolved"].as_u64().unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        11,
        "jacobian",
        identity_ok && points >= 20 && violations == 0 && unresolved == 0 && secs < 1200.0,
        format!(
            "identity case J = {jacobians:.4?} at R_max 8/10/12; deformed: {violations} violations, \
             {unresolved} unresolved at {points} points; {secs:.1}s"
        ),
    );
}

#[test]
fn c12_eccentricity() {
    let mut r = rng::stream(112, 0);
    let mut ellipsoid_gap: f64 = 0.0;
    let ellipsoids = [
        ConvexDomain::unit_ball(2),
        random_ellipsoid(&mut r, 2).0,
        context("ellipsoid-3d.json").loaded.domain,
    ];
    for d in &ellipsoids {
        let pts = chart_points(d, &d.basepoint_chart(), 2.0, 10, &mut r).unwrap();
        let rep = eccentricity(d, &pts).unwrap();
        ellipsoid_gap = ellipsoid_gap
            .max((rep.max_n - 1.0).abs())
            .max((rep.min_n - 1.0).abs());
    }
    let d = deformed_hull();
    let pts = chart_points(&d, &d.basepoint_chart(), 1.0, 50, &mut r).unwrap();
    let rep = eccentricity(&d, &pts).unwrap();
    let n = d.dim() as i32;
    let sandwich = rep.samples.iter().all(|s| {
        s.n_value >= 1.0
            && s.k_value.powi(-2 * n) <= s.n_value
            && s.n_value <= s.k_value.powi(2 * n)
    });
    verdict(
        12,
        "eccentricity",
        ellipsoid_gap <= 1e-6 && rep.samples.len() == 50 && sandwich,
        format!(
            "ellipsoids |N − 1| ≤ {ellipsoid_gap:.1e}; deformed N in [{:.4}, {:.4}], largest K {:.4}",
            rep.min_n, rep.max_n, rep.max_k
        ),
    );
}

#[test]
fn c13_homotopy() {
    let art = run_experiment(&context("modular.json"), Experiment::Homotopy);
    let tracks = art.summary["tracks"].as_array().unwrap();
    let start_ok = tracks
        .iter()
        .all(|t| t["start_error"].as_f64().unwrap() <= 0.05);
    let end_ok = tracks.iter().all(|t| t["end_equals_natural_map"] == true);
    let enclosed = tracks.iter().filter(|t| t["enclosed"] == true).count();
    let worst_start = tracks
        .iter()
        .map(|t| t["start_error"].as_f64().unwrap())
        .fold(0.0, f64::max);
    verdict(
        13,
        "homotopy",
        tracks.len() >= 10 && start_ok && end_ok && enclosed == tracks.len(),
        format!(
            "{} deep-cusp tracks: Ψ₀ error ≤ {worst_start:.2e}, Ψ₁ = Φ exactly: {end_ok}, enclosed {enclosed}/{}",
            tracks.len(),
            tracks.len()
        ),
    );
}

/// Runs `verify --suite all` and every experiment; returns the exit codes.
fn run_all(bin: &str, scene: &Path, out: &Path) -> Vec<Option<i32>> {
    let mut jobs: Vec<Vec<&str>> = vec![vec!["verify", "--suite", "all"]];
    for name in [
        "entropy",
        "volume",
        "natural-map",
        "homotopy",
        "jacobian-bound",
        "rigidity-ratio",
    ] {
        jobs.push(vec!["experiment", "--name", name]);
    }
    jobs.iter()
        .map(|job| {
            Command::new(bin)
                .args(job)
                .arg("--scene")
                .arg(scene)
                .arg("--out")
                .arg(out)
                .output()
                .unwrap()
                .status
                .code()
        })
        .collect()
}

#[test]
fn c14_determinism() {
    let bin = env!("CARGO_BIN_EXE_hilbert-lab");
    let root = std::env::temp_dir().join(format!("hilbert-determinism-{}", std::process::id()));
    std::fs::create_dir_all(&root).unwrap();
    // The shipped lattice scene, shrunk so two full passes stay quick.
    let mut scene: Value =
        serde_json::from_str(&std::fs::read_to_string(scene_path("ellipsoid-2d.json")).unwrap())
            .unwrap();
    scene["name"] = "determinism".into();
    scene["samples"] = serde_json::json!({ "count": 3, "radius": 0.8 });
    scene["homotopy"] = serde_json::json!({ "steps": 4, "visual_atoms": 1024 });
    let path = root.join("scene.json");
    std::fs::write(&path, serde_json::to_string_pretty(&scene).unwrap()).unwrap();
    let (a, b) = (root.join("a"), root.join("b"));
    let codes = run_all(bin, &path, &a);
    let same_codes = codes == run_all(bin, &path, &b);

    let mut compared = 0;
    let mut differing = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        let s = name.to_string_lossy().to_string();
        if s.ends_with(".meta.json") || !(s.ends_with(".json") || s.ends_with(".csv")) {
            continue;
        }
        compared += 1;
        if std::fs::read(a.join(&name)).unwrap() != std::fs::read(b.join(&name)).unwrap() {
            differing.push(s);
        }
    }
    std::fs::remove_dir_all(&root).ok();
    verdict(
        14,
        "determinism",
        compared == 14 && differing.is_empty() && same_codes,
        format!("{compared} report files compared byte for byte, differing: {differing:?}; exit codes {codes:?}"),
    );
}
