//! Batch driver: loads a scene, runs verification suites or experiments and
//! writes deterministic JSON/CSV reports.

// NaN must fail the checks, hence `!(x <= tol)` rather than `x > tol`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hilbert_core::GeometryError;
use thiserror::Error;

pub mod experiments;
pub mod natural;
pub mod report;
pub mod sampling;
pub mod scene;
pub mod suites;

pub use scene::{Loaded, Scene};

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed scene or arguments; exit code 2.
    #[error("scene error: {0}")]
    Schema(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} check(s) failed")]
    Failed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Schema(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hilbert-lab",
    version,
    about = "Hilbert geometry verification suites and experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Report directory; the scene's `output`, else `./out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shards: Option<usize>,
    /// Monte Carlo samples per volume estimate and atoms per visual measure.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run invariant suites; exit 1 if any invariant is violated.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Run an experiment and write its artifacts.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        name: Experiment,
    },
    /// Print how the scene is interpreted.
    Describe {
        #[arg(long)]
        scene: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Metric,
    Busemann,
    Measures,
    Barycenter,
    Cusp,
    Eccentricity,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [
        Suite::Metric,
        Suite::Busemann,
        Suite::Measures,
        Suite::Barycenter,
        Suite::Cusp,
        Suite::Eccentricity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Metric => "metric",
            Self::Busemann => "busemann",
            Self::Measures => "measures",
            Self::Barycenter => "barycenter",
            Self::Cusp => "cusp",
            Self::Eccentricity => "eccentricity",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Entropy,
    Volume,
    NaturalMap,
    Homotopy,
    JacobianBound,
    RigidityRatio,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Entropy => "entropy",
            Self::Volume => "volume",
            Self::NaturalMap => "natural-map",
            Self::Homotopy => "homotopy",
            Self::JacobianBound => "jacobian-bound",
            Self::RigidityRatio => "rigidity-ratio",
        }
    }
}

/// Resolved run settings shared by suites and experiments.
#[derive(Debug, Clone)]
pub struct Context {
    pub loaded: Loaded,
    pub seed: u64,
    pub shards: usize,
    pub budget: Option<usize>,
}

impl Context {
    pub fn new(loaded: Loaded, args: &RunArgs) -> Result<Self, CliError> {
        let seed = loaded.seed(args.seed)?;
        let shards = loaded.shards(args.shards);
        let budget = args.budget.or(loaded.scene.budget);
        if budget == Some(0) {
            return Err(CliError::Schema("budget must be positive".into()));
        }
        Ok(Self {
            loaded,
            seed,
            shards,
            budget,
        })
    }

    pub fn from_scene(scene: Scene, args: &RunArgs) -> Result<Self, CliError> {
        Self::new(scene.load()?, args)
    }

    /// Atoms per visual measure.
    pub fn visual_atoms(&self) -> usize {
        self.budget
            .unwrap_or(self.loaded.scene.homotopy.visual_atoms)
    }

    pub fn out_dir(&self, flag: Option<&PathBuf>) -> PathBuf {
        flag.cloned()
            .or_else(|| self.loaded.scene.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Run a parsed command line; the returned code is the process exit status.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Describe { scene } => {
            let loaded = Scene::from_path(&scene)?.load()?;
            let text = serde_json::to_string_pretty(&report::describe(&loaded))
                .map_err(|e| CliError::Schema(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
        Command::Verify { run, suite } => {
            let ctx = Context::from_scene(Scene::from_path(&run.scene)?, &run)?;
            let out = report::Output::new(ctx.out_dir(run.out.as_ref()))?;
            let outcome = suites::verify(&ctx, suite)?;
            let stem = format!("verify-{}", suite.as_str());
            let header = report::Header::new(&ctx, "verify", suite.as_str());
            out.json(&stem, &header, &outcome)?;
            out.csv(&stem, &header, &suites::table(&outcome.results))?;
            out.metadata(&stem, &header)?;
            for r in &outcome.results {
                println!(
                    "{:<12} {:<32} trials {:>6} violations {:>4}  {}",
                    r.suite, r.invariant, r.trials, r.violations, r.note
                );
            }
            match outcome.violations {
                0 => Ok(()),
                k => Err(CliError::Failed(k)),
            }
        }
        Command::Experiment { run, name } => {
            let ctx = Context::from_scene(Scene::from_path(&run.scene)?, &run)?;
            let out = report::Output::new(ctx.out_dir(run.out.as_ref()))?;
            let header = report::Header::new(&ctx, "experiment", name.as_str());
            let artifact = experiments::run(&ctx, name)?;
            let stem = format!("experiment-{}", name.as_str());
            out.json(&stem, &header, &artifact.summary)?;
            out.csv(&stem, &header, &artifact.table)?;
            out.metadata(&stem, &header)?;
            println!("{}", artifact.headline);
            match artifact.failed_checks {
                0 => Ok(()),
                k => Err(CliError::Failed(k)),
            }
        }
    }
}
