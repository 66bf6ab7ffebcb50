//! `restune run`.

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use restune_core::pipeline::{run_experiment, ExecutionMode, StageKind};
use restune_core::plants::RobotKind;
use sha2::{Digest, Sha256};

use crate::artifacts::{self, RunManifest, StageFiles, StageSummary, CONFIG_COPY};
use crate::config::{ConfigError, ExperimentConfig, Overrides};
use crate::Failure;

pub const OUT_ROOT_ENV: &str = "RESTUNE_OUT_ROOT";

/// `<root>/<config stem>-seed<seed>`; root from the config, then the
/// environment, then `runs`.
pub fn default_run_dir(config_path: &Path, cfg: &ExperimentConfig, env_root: Option<PathBuf>) -> PathBuf {
    let root = cfg
        .output_dir
        .clone()
        .or(env_root)
        .unwrap_or_else(|| PathBuf::from("runs"));
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    root.join(format!("{stem}-seed{}", cfg.seed))
}

pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub env_root: Option<PathBuf>,
    pub overrides: Overrides,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn mode_name(m: ExecutionMode) -> &'static str {
    match m {
        ExecutionMode::Interleaved => "interleaved",
        ExecutionMode::Threaded => "threaded",
    }
}

pub fn cmd_run(args: &RunArgs) -> std::result::Result<PathBuf, Failure> {
    let (mut cfg, text) = ExperimentConfig::load(&args.config).map_err(Failure::Config)?;
    cfg.apply_overrides(&args.overrides);
    let spec = cfg.validate(&text, &args.config).map_err(Failure::Config)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| default_run_dir(&args.config, &cfg, args.env_root.clone()));
    artifacts::create_run_dir(&dir).map_err(|e| {
        Failure::Config(ConfigError {
            path: dir.clone(),
            line: None,
            column: None,
            message: format!("{e:#}"),
        })
    })?;
    fs::write(dir.join(CONFIG_COPY), &text)
        .with_context(|| format!("copying config into {}", dir.display()))
        .map_err(Failure::Stage)?;

    let started = artifacts::now();
    let kind = spec.robot.kind();
    let stages: RefCell<Vec<StageSummary>> = RefCell::new(Vec::new());
    let outcome = run_experiment(&spec, |r| {
        let s = artifacts::write_stage(&dir, kind, r).map_err(|e| restune_core::Error::Format(format!("{e:#}")))?;
        log::info!(
            "stage {} ({}) done: {} steps, {} updates, trailing H2 {:?}",
            s.index,
            s.name,
            s.records,
            s.updates,
            s.trailing_mean_h2
        );
        stages.borrow_mut().push(s);
        Ok(())
    });
    let mut summaries = stages.into_inner();
    let error = match &outcome {
        Ok(_) => None,
        Err(f) => {
            let files = StageFiles {
                chain: None,
                ..StageFiles::for_stage(f.index, &f.label)
            };
            let partial = &f.failure;
            let stage_kind = spec.stages[f.index].kind;
            let tags = (
                stage_kind.target().tag(),
                (stage_kind == StageKind::RealToSim).then_some("sim"),
            );
            if let Err(e) = artifacts::write_logs(&dir, &files, kind, &partial.log, &partial.updates, &partial.samples, tags) {
                log::error!("could not write partial logs: {e:#}");
            }
            summaries.push(StageSummary {
                index: f.index,
                name: f.label.clone(),
                kind: spec.stages[f.index].kind.as_str().into(),
                status: "failed".into(),
                records: partial.log.len(),
                updates: partial.updates.len(),
                skipped_updates: 0,
                warm_start: None,
                final_mean_h2: None,
                trailing_mean_h2: None,
                wall_clock_s: 0.0,
                files,
            });
            Some(f.to_string())
        }
    };
    let manifest = RunManifest {
        tool: "restune".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "run".into(),
        config_file: args.config.display().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: cfg.seed,
        robot: match kind {
            RobotKind::DiffDrive => "diff-drive".into(),
            RobotKind::Arm6Dof => "arm-6dof".into(),
        },
        execution: mode_name(cfg.execution).into(),
        overrides: serde_json::to_value(&args.overrides).unwrap_or_default(),
        started,
        finished: artifacts::now(),
        status: if error.is_some() { "failed" } else { "complete" }.into(),
        error: error.clone(),
        stages: summaries,
    };
    manifest.write(&dir).map_err(Failure::Stage)?;
    match error {
        None => Ok(dir),
        Some(e) => Err(Failure::Stage(anyhow::anyhow!("{e} (partial logs in {})", dir.display()))),
    }
}
