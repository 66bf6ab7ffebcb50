//! `restune replay`: run one learning stage against a recorded stream.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use restune_core::param_net::init_params;
use restune_core::pipeline::{run_stage, ChainStage, ResidualChain, StageConfig, StageKind, StageResult};
use restune_core::plants::{ArmParams, DiffDriveParams, ReplaySource, Robot, RobotKind};

use crate::artifacts::{self, RunManifest, CONFIG_COPY};
use crate::config::{ConfigError, ExperimentConfig, Overrides};
use crate::run::sha256_hex;
use crate::Failure;

pub struct ReplayArgs {
    pub csv: PathBuf,
    pub config: Option<PathBuf>,
    pub tag: String,
    pub sim_tag: Option<String>,
    pub stage: Option<StageKind>,
    pub out: Option<PathBuf>,
    pub env_root: Option<PathBuf>,
    pub overrides: Overrides,
}

fn default_kind(tag: &str, sim_tag: Option<&str>) -> StageKind {
    match (tag, sim_tag) {
        (_, Some(_)) => StageKind::RealToSim,
        ("sim", None) => StageKind::SimToKin,
        _ => StageKind::RealToKin,
    }
}

fn bad_input(path: &Path, message: String) -> Failure {
    Failure::Config(ConfigError {
        path: path.to_path_buf(),
        line: None,
        column: None,
        message,
    })
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<PathBuf, Failure> {
    let bytes = fs::read(&args.csv).map_err(|e| bad_input(&args.csv, format!("cannot read stream: {e}")))?;
    let header = BufReader::new(bytes.as_slice())
        .lines()
        .next()
        .transpose()
        .map_err(|e| bad_input(&args.csv, e.to_string()))?
        .ok_or_else(|| bad_input(&args.csv, "empty stream file".into()))?;
    let kind = ReplaySource::detect_kind(&header).map_err(|e| bad_input(&args.csv, e.to_string()))?;

    let (cfg, text) = match &args.config {
        Some(p) => {
            let (mut c, t) = ExperimentConfig::load(p).map_err(Failure::Config)?;
            c.apply_overrides(&args.overrides);
            c.validate(&t, p).map_err(Failure::Config)?;
            if c.robot != kind {
                return Err(bad_input(
                    p,
                    format!("config robot {} does not match the {} stream", c.robot.as_str(), kind.as_str()),
                ));
            }
            (Some(c), Some(t))
        }
        None => (None, None),
    };
    let robot = match &cfg {
        Some(c) => c.robot().map_err(|m| bad_input(&args.csv, m))?,
        None => match kind {
            RobotKind::DiffDrive => Robot::DiffDrive(DiffDriveParams::default()),
            RobotKind::Arm6Dof => Robot::Arm(ArmParams::default()),
        },
    };
    let stage_kind = args
        .stage
        .unwrap_or_else(|| default_kind(&args.tag, args.sim_tag.as_deref()));
    let mut stage = cfg
        .as_ref()
        .and_then(|c| c.stages.iter().find(|s| s.kind == stage_kind).cloned())
        .unwrap_or_else(|| StageConfig::new(stage_kind));
    stage.kind = stage_kind;
    if let Some(s) = args.overrides.stride {
        stage.stride = Some(s);
    }
    if let Some(a) = args.overrides.filter_alpha {
        stage.filter_alpha = a;
    }
    stage.validate().map_err(|e| bad_input(&args.csv, e.to_string()))?;
    if stage_kind == StageKind::RealToSim && args.sim_tag.is_none() {
        return Err(bad_input(&args.csv, "real-to-sim replay needs --sim-tag".into()));
    }
    let seed = args
        .overrides
        .seed
        .or(stage.seed)
        .or(cfg.as_ref().map(|c| c.seed))
        .unwrap_or(0);

    let mut source = ReplaySource::from_reader(bytes.as_slice(), robot, &args.tag, args.sim_tag.as_deref())
        .map_err(|e| bad_input(&args.csv, e.to_string()))?;
    let dir = args.out.clone().unwrap_or_else(|| {
        let root = cfg
            .as_ref()
            .and_then(|c| c.output_dir.clone())
            .or(args.env_root.clone())
            .unwrap_or_else(|| PathBuf::from("runs"));
        let stem = args.csv.file_stem().map_or("stream".into(), |s| s.to_string_lossy().into_owned());
        root.join(format!("{stem}-replay-seed{seed}"))
    });
    artifacts::create_run_dir(&dir).map_err(|e| bad_input(&dir, format!("{e:#}")))?;
    if let Some(t) = &text {
        fs::write(dir.join(CONFIG_COPY), t)
            .with_context(|| format!("copying config into {}", dir.display()))
            .map_err(Failure::Stage)?;
    }

    let started_at = artifacts::now();
    let started = Instant::now();
    let net = kind.net_spec();
    let label = stage.label();
    let params = init_params(&net, seed, stage.init_scale).map_err(|e| Failure::Stage(e.into()))?;
    let chain = ResidualChain::new(stage_kind.base()).with_stage(ChainStage {
        label: label.clone(),
        spec: net,
        params,
        frozen: false,
        seed,
    });
    let mode = cfg.as_ref().map(|c| c.execution).unwrap_or_default();
    let outcome = run_stage(&stage, chain, &mut source, mode);
    let (summary, error) = match outcome {
        Ok(output) => {
            let result = StageResult {
                index: 0,
                label: label.clone(),
                kind: stage_kind,
                target: stage_kind.target(),
                has_sim: args.sim_tag.is_some(),
                output,
                wall_clock: started.elapsed(),
            };
            (artifacts::write_stage(&dir, kind, &result).map_err(Failure::Stage)?, None)
        }
        Err(f) => {
            let files = artifacts::StageFiles {
                chain: None,
                ..artifacts::StageFiles::for_stage(0, &label)
            };
            artifacts::write_logs(&dir, &files, kind, &f.log, &f.updates, &f.samples, (stage_kind.target().tag(), None))
                .map_err(Failure::Stage)?;
            let s = artifacts::StageSummary {
                index: 0,
                name: label.clone(),
                kind: stage_kind.as_str().into(),
                status: "failed".into(),
                records: f.log.len(),
                updates: f.updates.len(),
                skipped_updates: 0,
                warm_start: None,
                final_mean_h2: None,
                trailing_mean_h2: None,
                wall_clock_s: started.elapsed().as_secs_f64(),
                files,
            };
            (s, Some(f.to_string()))
        }
    };
    let manifest = RunManifest {
        tool: "restune".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "replay".into(),
        config_file: args.csv.display().to_string(),
        config_sha256: sha256_hex(&bytes),
        seed,
        robot: kind.as_str().into(),
        execution: format!("{mode:?}").to_lowercase(),
        overrides: serde_json::to_value(&args.overrides).unwrap_or_default(),
        started: started_at,
        finished: artifacts::now(),
        status: if error.is_some() { "failed" } else { "complete" }.into(),
        error: error.clone(),
        stages: vec![summary],
    };
    manifest.write(&dir).map_err(Failure::Stage)?;
    match error {
        None => Ok(dir),
        Some(e) => Err(Failure::Stage(anyhow!("{e} (partial logs in {})", dir.display()))),
    }
}

