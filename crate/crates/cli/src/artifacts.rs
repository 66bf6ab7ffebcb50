//! Run-directory layout and the run manifest.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use restune_core::pipeline::metrics::{write_metrics, write_updates};
use restune_core::pipeline::{MetricRecord, MetricSummary, StageResult, UpdateRecord};
use restune_core::plants::{RobotKind, StepSample, StreamWriter};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFiles {
    pub metrics: String,
    pub diagnostics: String,
    pub stream: String,
    pub chain: Option<String>,
}

impl StageFiles {
    pub fn for_stage(index: usize, label: &str) -> Self {
        let stem = format!("{index}_{}", sanitize(label));
        StageFiles {
            metrics: format!("metrics_{stem}.csv"),
            diagnostics: format!("diagnostics_{stem}.csv"),
            stream: format!("stream_{stem}.csv"),
            chain: Some(format!("chain_{stem}.json")),
        }
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub name: String,
    pub kind: String,
    pub status: String,
    pub records: usize,
    pub updates: usize,
    pub skipped_updates: u64,
    pub warm_start: Option<bool>,
    pub final_mean_h2: Option<f64>,
    pub trailing_mean_h2: Option<f64>,
    pub wall_clock_s: f64,
    pub files: StageFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_file: String,
    pub config_sha256: String,
    pub seed: u64,
    pub robot: String,
    pub execution: String,
    pub overrides: serde_json::Value,
    pub started: String,
    pub finished: String,
    /// `complete` or `failed`.
    pub status: String,
    pub error: Option<String>,
    pub stages: Vec<StageSummary>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            bail!("missing artifact {}", path.display());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Writes the manifest; refuses to replace an existing one.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.status == "complete"
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Creates a fresh run directory; an existing one is an error.
pub fn create_run_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        bail!("run directory {} already exists; refusing to overwrite", dir.display());
    }
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::create_dir(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
}

pub fn write_logs(
    dir: &Path,
    files: &StageFiles,
    kind: RobotKind,
    log: &[MetricRecord],
    updates: &[UpdateRecord],
    samples: &[StepSample],
    tags: (&str, Option<&str>),
) -> Result<()> {
    write_metrics(create(dir.join(&files.metrics))?, log)?;
    write_updates(create(dir.join(&files.diagnostics))?, updates)?;
    let mut w = StreamWriter::new(create(dir.join(&files.stream))?, kind)?;
    for s in samples {
        w.write_sample(s, tags.0, tags.1)?;
    }
    w.finish()?;
    Ok(())
}

/// Writes every artifact of a completed stage and returns its summary.
pub fn write_stage(dir: &Path, kind: RobotKind, r: &StageResult) -> Result<StageSummary> {
    let files = StageFiles::for_stage(r.index, &r.label);
    let o = &r.output;
    let sim_tag = r.has_sim.then_some("sim");
    write_logs(dir, &files, kind, &o.log, &o.updates, &o.samples, (r.target.tag(), sim_tag))?;
    if let Some(chain) = &files.chain {
        let snap = o.chain.snapshot()?;
        serde_json::to_writer_pretty(create(dir.join(chain))?, &snap)?;
    }
    let summary = MetricSummary::from_records(&o.log).ok();
    Ok(StageSummary {
        index: r.index,
        name: r.label.clone(),
        kind: r.kind.as_str().to_string(),
        status: "complete".into(),
        records: o.log.len(),
        updates: o.updates.len(),
        skipped_updates: o.skipped_updates,
        warm_start: o.warm_start,
        final_mean_h2: summary.as_ref().map(|s| s.final_quarter_mean_h2),
        trailing_mean_h2: summary.as_ref().map(|s| s.trailing_mean_h2),
        wall_clock_s: r.wall_clock.as_secs_f64(),
        files,
    })
}
