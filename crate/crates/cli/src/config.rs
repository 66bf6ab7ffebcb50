//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! robot = "diff-drive"            # or "arm-6dof"
//! execution = "interleaved"       # or "threaded"
//!
//! [diff_drive]                    # [arm] for the arm
//! wheel_base = 0.025
//!
//! [sim_residual.shape]
//! kind = "constant-bias"
//! bias = [0.0, 0.0, 0.2]
//! [sim_residual.noise]
//! kind = "gaussian"
//! sigma = [0.01, 0.01, 0.01]
//!
//! [trajectory]
//! kind = "spin"
//! amplitude = 2.0
//! period = 4.0
//! duration = 2.0
//!
//! [[stages]]
//! kind = "sim-to-kin"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use restune_core::pipeline::{ExecutionMode, ExperimentSpec, StageConfig};
use restune_core::plants::{ArmParams, DiffDriveParams, GroundTruthResidual, Robot, RobotKind, TrajectorySpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Root directory for run directories.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub execution: ExecutionMode,
    pub robot: RobotKind,
    #[serde(default)]
    pub diff_drive: Option<DiffDriveParams>,
    #[serde(default)]
    pub arm: Option<ArmParams>,
    #[serde(default)]
    pub sim_residual: GroundTruthResidual,
    #[serde(default)]
    pub real_residual: GroundTruthResidual,
    pub trajectory: TrajectorySpec,
    pub stages: Vec<StageConfig>,
}

/// A configuration problem, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

/// First line assigning `key`, preferring lines inside `[[stages]]` entry
/// `stage` when given.
fn find_key(text: &str, key: &str, stage: Option<usize>) -> Option<usize> {
    let mut stage_idx: Option<usize> = None;
    let mut in_stage = false;
    let mut fallback = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with("[[stages]]") {
            stage_idx = Some(stage_idx.map_or(0, |s| s + 1));
            in_stage = true;
            continue;
        }
        if line.starts_with('[') && !line.starts_with("[stages.") {
            in_stage = false;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        if lhs.trim().trim_matches('"') != key {
            continue;
        }
        match stage {
            Some(s) if in_stage && stage_idx == Some(s) => return Some(i + 1),
            _ => {
                fallback.get_or_insert(i + 1);
            }
        }
    }
    fallback
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        let cfg = Self::parse(&text, path)?;
        Ok((cfg, text))
    }

    pub fn robot(&self) -> Result<Robot, String> {
        match self.robot {
            RobotKind::DiffDrive => {
                if self.arm.is_some() {
                    return Err("[arm] given for a diff-drive robot".into());
                }
                Ok(Robot::DiffDrive(self.diff_drive.unwrap_or_default()))
            }
            RobotKind::Arm6Dof => {
                if self.diff_drive.is_some() {
                    return Err("[diff_drive] given for an arm-6dof robot".into());
                }
                Ok(Robot::Arm(self.arm.clone().unwrap_or_default()))
            }
        }
    }

    pub fn to_spec(&self) -> Result<ExperimentSpec, String> {
        Ok(ExperimentSpec {
            robot: self.robot()?,
            sim_residual: self.sim_residual.clone(),
            real_residual: self.real_residual.clone(),
            trajectory: self.trajectory,
            stages: self.stages.clone(),
            seed: self.seed,
            mode: self.execution,
        })
    }

    /// Semantic validation; errors point at the offending key in `text`.
    pub fn validate(&self, text: &str, path: &Path) -> Result<ExperimentSpec, ConfigError> {
        let locate = |message: String, key: Option<&str>, stage: Option<usize>| ConfigError {
            path: path.to_path_buf(),
            line: key.and_then(|k| find_key(text, k, stage)),
            column: None,
            message,
        };
        let spec = self.to_spec().map_err(|m| locate(m, Some("robot"), None))?;
        for (i, s) in self.stages.iter().enumerate() {
            if let Err(e) = s.validate() {
                return Err(locate(format!("stage {i}: {e}"), key_of(&e), Some(i)));
            }
        }
        spec.validate().map_err(|e| locate(e.to_string(), key_of(&e), None))?;
        Ok(spec)
    }

    /// Applies command-line overrides to every stage.
    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.single_thread {
            self.execution = ExecutionMode::Interleaved;
        }
        for s in &mut self.stages {
            if let Some(stride) = o.stride {
                s.stride = Some(stride);
            }
            if let Some(a) = o.filter_alpha {
                s.filter_alpha = a;
            }
        }
    }
}

fn key_of(e: &restune_core::Error) -> Option<&'static str> {
    match e {
        restune_core::Error::InvalidParameter { name, .. } => Some(name),
        restune_core::Error::Unsupported(_) => Some("kind"),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub stride: Option<usize>,
    pub filter_alpha: Option<f64>,
    pub single_thread: bool,
}
