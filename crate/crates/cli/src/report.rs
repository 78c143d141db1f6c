//! Report files. JSON and CSV artifacts depend only on the scene, seeds and
//! shard count; wall-clock facts go to a separate `.meta.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use hilbert_core::domain::DomainKind;
use serde::Serialize;
use serde_json::json;

use crate::scene::{digest, Loaded};
use crate::{CliError, Context};

pub const TOOL: &str = "hilbert-lab";

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub target: String,
    pub scene: String,
    pub scene_hash: String,
    /// Hash of everything that determines the numbers below.
    pub param_hash: String,
    pub seed: u64,
    pub shards: usize,
    pub budget: Option<usize>,
}

impl Header {
    pub fn new(ctx: &Context, command: &str, target: &str) -> Self {
        let params = json!({
            "command": command,
            "target": target,
            "scene_hash": ctx.loaded.scene_hash,
            "seed": ctx.seed,
            "shards": ctx.shards,
            "budget": ctx.budget,
            "version": hilbert_core::VERSION,
        });
        Self {
            tool: TOOL,
            version: hilbert_core::VERSION,
            command: command.into(),
            target: target.into(),
            scene: ctx.loaded.scene.name.clone(),
            scene_hash: ctx.loaded.scene_hash.clone(),
            param_hash: digest(&params.to_string())[..16].to_string(),
            seed: ctx.seed,
            shards: ctx.shards,
            budget: ctx.budget,
        }
    }
}

/// Rows of stringly typed cells; provenance columns are prepended on write.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Cell formatting: shortest round-trip representation, empty for missing.
pub fn cell(x: f64) -> String {
    format!("{x}")
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map(cell).unwrap_or_default()
}

pub fn coords_cell(c: &[f64]) -> String {
    c.iter().map(|x| cell(*x)).collect::<Vec<_>>().join(" ")
}

#[derive(Serialize)]
struct Envelope<'a, B: Serialize> {
    header: &'a Header,
    body: &'a B,
}

pub struct Output {
    dir: PathBuf,
    started: SystemTime,
    clock: Instant,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn json<B: Serialize>(
        &self,
        stem: &str,
        header: &Header,
        body: &B,
    ) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&Envelope { header, body })
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn csv(&self, stem: &str, header: &Header, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        let mut columns = vec![
            "version".to_string(),
            "param_hash".into(),
            "seed".into(),
            "budget".into(),
        ];
        columns.extend(table.columns.iter().cloned());
        w.write_record(&columns).map_err(csv_error)?;
        let budget = header.budget.map(|b| b.to_string()).unwrap_or_default();
        for row in &table.rows {
            let mut record = vec![
                header.version.to_string(),
                header.param_hash.clone(),
                header.seed.to_string(),
                budget.clone(),
            ];
            record.extend(row.iter().cloned());
            w.write_record(&record).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn metadata(&self, stem: &str, header: &Header) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{stem}.meta.json"));
        let since_epoch = |t: SystemTime| {
            t.duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0)
        };
        let meta = json!({
            "param_hash": header.param_hash,
            "started_unix": since_epoch(self.started),
            "finished_unix": since_epoch(SystemTime::now()),
            "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        });
        fs::write(&path, format!("{meta:#}\n"))?;
        Ok(path)
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// What `describe` prints.
pub fn describe(loaded: &Loaded) -> serde_json::Value {
    let d = &loaded.domain;
    let kind = match d.kind() {
        DomainKind::Ellipsoid(_) => "ellipsoid",
        DomainKind::PNormBall(_) => "p-norm ball",
        DomainKind::OrbitHull(_) => "orbit hull (inner approximation)",
    };
    let group = loaded.group.as_ref().map(|g| {
        json!({
            "label": g.label(),
            "generators": g.generators().len(),
            "relations": g.relations(),
            "max_relation_residual": g.max_relation_residual().ok(),
        })
    });
    let cusp = loaded
        .example
        .as_ref()
        .and_then(|e| e.cusp.as_ref().map(|c| (c, &e.parabolic_generators)))
        .map(|(c, p)| json!({ "point": c.coords().as_slice(), "parabolic_generators": p }));
    json!({
        "scene": loaded.scene.name,
        "scene_hash": loaded.scene_hash,
        "dimension": d.dim(),
        "domain": {
            "kind": kind,
            "approximation": d.is_approximation(),
            "chart_functional": d.chart().functional().as_slice(),
            "basepoint_chart": d.basepoint_chart().as_slice(),
        },
        "group": group,
        "cusp": cusp,
        "basepoints": loaded.basepoints.iter().map(|p| p.coords().as_slice().to_vec()).collect::<Vec<_>>(),
        "seed": loaded.scene.seed,
        "trials": loaded.scene.trials,
        "ps": loaded.scene.ps,
        "entropy": loaded.scene.entropy,
        "correspondence": loaded.scene.correspondence,
        "samples": loaded.scene.samples,
    })
}
