//! Base kinematic models, synthetic reference plants and trajectories.

pub mod arm;
pub mod diff_drive;
pub mod residual;
pub mod stream;
pub mod trajectory;

use serde::{Deserialize, Serialize};

pub use arm::{arm_fk, fk_velocity, ArmParams, DhRow, JOINTS};
pub use diff_drive::{diff_drive_rate, wrap_angle, DiffDriveParams, WheelCommand};
pub use residual::{GroundTruthResidual, NoiseSpec, ResidualKind, ResidualModel};
pub use stream::{
    derive_seed, reference_step, resolve_relative, PlantState, ReferenceSource, ReplaySource, StepSample, StreamTarget,
    StreamWriter, SyntheticSource,
};
pub use trajectory::{trajectory, Command, TrajectoryKind, TrajectorySpec};

use crate::param_net::MlpSpec;
use crate::Result;

/// Hidden width of every residual network in this crate.
pub const HIDDEN_WIDTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobotKind {
    DiffDrive,
    #[serde(rename = "arm-6dof")]
    Arm6Dof,
}

impl RobotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RobotKind::DiffDrive => "diff-drive",
            RobotKind::Arm6Dof => "arm-6dof",
        }
    }

    /// Width of the network input `z`.
    pub fn net_input_dim(self) -> usize {
        match self {
            RobotKind::DiffDrive => 5,
            RobotKind::Arm6Dof => 6,
        }
    }

    pub fn net_spec(self) -> MlpSpec {
        MlpSpec::new(self.net_input_dim(), HIDDEN_WIDTH, 3)
    }
}

/// A base kinematic model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Robot {
    DiffDrive(DiffDriveParams),
    Arm(ArmParams),
}

impl Robot {
    pub fn kind(&self) -> RobotKind {
        match self {
            Robot::DiffDrive(_) => RobotKind::DiffDrive,
            Robot::Arm(_) => RobotKind::Arm6Dof,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Robot::DiffDrive(p) => p.validate(),
            Robot::Arm(p) => p.validate(),
        }
    }
}
