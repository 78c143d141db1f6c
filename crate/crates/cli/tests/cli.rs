//! Exit codes and report layout of the binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scene(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenes")
        .join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hilbert-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hilbert-lab"))
        .args(args)
        .output()
        .unwrap()
}

fn run(args: &[&str], scene: &Path, out: &Path) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend([
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    lab(&all)
}

#[test]
fn ellipsoid_scene_passes_every_suite() {
    let out = scratch("ellipsoid");
    let o = run(
        &["verify", "--suite", "all"],
        &scene("ellipsoid-3d.json"),
        &out,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn deformed_scene_passes_metric_suite() {
    let out = scratch("deformed");
    let o = run(
        &["verify", "--suite", "metric"],
        &scene("deformed.json"),
        &out,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn group_leaving_the_domain_exits_one() {
    let out = scratch("noninvariant");
    let o = run(
        &["verify", "--suite", "metric"],
        &scene("non-invariant.json"),
        &out,
    );
    assert_eq!(o.status.code(), Some(1));
    let report = std::fs::read_to_string(out.join("verify-metric.json")).unwrap();
    assert!(report.contains("does not preserve the domain"));
    // Measures that need the group are refused outright.
    let o = run(
        &["experiment", "--name", "natural-map"],
        &scene("non-invariant.json"),
        &out,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not preserve the domain"));
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn schema_errors_exit_two() {
    let dir = scratch("schema");
    let cases = [
        ("garbage", "{ not json"),
        (
            "unknown-field",
            r#"{"name": "x", "seed": 1, "colour": "red", "group": {"family": "modular"}}"#,
        ),
        (
            "no-seed",
            r#"{"name": "x", "group": {"family": "modular"}}"#,
        ),
        ("no-geometry", r#"{"name": "x", "seed": 1}"#),
        (
            "bad-basepoint",
            r#"{"name": "x", "seed": 1, "group": {"family": "modular"}, "basepoints": [[1, 2, 0]]}"#,
        ),
        (
            "bad-window",
            r#"{"name": "x", "seed": 1, "group": {"family": "modular"}, "entropy": {"r1": 5, "r2": 4}}"#,
        ),
    ];
    for (tag, text) in cases {
        let path = dir.join(format!("{tag}.json"));
        std::fs::write(&path, text).unwrap();
        let o = run(&["verify", "--suite", "metric"], &path, &dir);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{tag}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = run(
        &["verify", "--suite", "metric", "--budget", "0"],
        &scene("ellipsoid-3d.json"),
        &dir,
    );
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        &["experiment", "--name", "entropy"],
        &dir.join("missing.json"),
        &dir,
    );
    assert_eq!(o.status.code(), Some(2));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn reports_carry_version_and_parameter_hash() {
    let out = scratch("layout");
    let o = run(
        &["verify", "--suite", "eccentricity", "--seed", "99"],
        &scene("ellipsoid-3d.json"),
        &out,
    );
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("verify-eccentricity.json")).unwrap(),
    )
    .unwrap();
    let header = &json["header"];
    assert_eq!(header["seed"], 99);
    assert_eq!(header["version"], env!("CARGO_PKG_VERSION"));
    let hash = header["param_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 16);

    let mut csv = csv::Reader::from_path(out.join("verify-eccentricity.csv")).unwrap();
    let columns: Vec<String> = csv.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&columns[..2], ["version", "param_hash"]);
    for rec in csv.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], env!("CARGO_PKG_VERSION"));
        assert_eq!(&rec[1], hash);
    }

    // Wall-clock data lives only in the metadata file.
    let report = std::fs::read_to_string(out.join("verify-eccentricity.json")).unwrap();
    assert!(!report.contains("started"));
    let meta = std::fs::read_to_string(out.join("verify-eccentricity.meta.json")).unwrap();
    assert!(meta.contains("started"));
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn rigidity_ratio_of_a_hyperbolic_lattice_is_one() {
    let out = scratch("rigidity");
    let o = run(
        &["experiment", "--name", "rigidity-ratio"],
        &scene("ellipsoid-2d.json"),
        &out,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("experiment-rigidity-ratio.json")).unwrap(),
    )
    .unwrap();
    let body = &json["body"];
    assert_eq!(body["equality_within_error"], true, "{body}");
    assert!(
        body["left"].is_number()
            && body["right"].is_number()
            && body["ratio_error"].as_f64().unwrap() > 0.0
    );
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn describe_prints_the_interpreted_scene() {
    let o = lab(&[
        "describe",
        "--scene",
        scene("modular.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dimension"], 2);
    assert!(v["cusp"]["point"].is_array());
}
