//! Reference trajectories expressed as commanded velocities.
//!
//! Planar robots receive a body command `(v, ω)`; the arm receives a
//! Cartesian end-effector velocity. Both are converted to plant inputs
//! through the base model's inverse relations by the stream layer.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::RobotKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Yaw rate `A·sin(2πt/T)` with zero forward speed.
    Spin,
    /// Forward (x) speed `A·sin(2πt/T)`.
    LineX,
    /// A full circle over the first half period, then a straight chord
    /// through the centre and back.
    #[serde(rename = "circle-2d-with-chord")]
    Circle2dWithChord,
    /// Circle of radius `A` in x/y while oscillating in z (arm only).
    #[serde(rename = "circle-3d")]
    Circle3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub amplitude: f64,
    pub period: f64,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Body { v: f64, omega: f64 },
    Cartesian([f64; 3]),
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid("period", format!("must be > 0, got {}", self.period)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration", format!("must be > 0, got {}", self.duration)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("amplitude", "must be finite"));
        }
        Ok(())
    }

    /// Number of samples `t = k·dt` with `t < duration`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn supports(&self, robot: RobotKind) -> bool {
        !matches!(
            (self.kind, robot),
            (TrajectoryKind::Circle3d, RobotKind::DiffDrive) | (TrajectoryKind::Spin, RobotKind::Arm6Dof)
        )
    }

    fn phase(&self, t: f64) -> f64 {
        (t / self.period).fract()
    }
}

/// Commanded velocity at time `t`.
pub fn trajectory(spec: &TrajectorySpec, robot: RobotKind, t: f64) -> Result<Command> {
    if !(0.0..=spec.duration).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: spec.duration,
        });
    }
    if !spec.supports(robot) {
        return Err(Error::Unsupported(format!(
            "trajectory {:?} on {}",
            spec.kind,
            robot.as_str()
        )));
    }
    let a = spec.amplitude;
    let p = spec.period;
    let wave = (TAU * t / p).sin();
    let s = spec.phase(t);
    Ok(match (robot, spec.kind) {
        (RobotKind::DiffDrive, TrajectoryKind::Spin) => Command::Body {
            v: 0.0,
            omega: a * wave,
        },
        (RobotKind::DiffDrive, TrajectoryKind::LineX) => Command::Body {
            v: a * wave,
            omega: 0.0,
        },
        (RobotKind::DiffDrive, TrajectoryKind::Circle2dWithChord) => {
            if s < 0.5 {
                Command::Body {
                    v: a,
                    omega: 2.0 * TAU / p,
                }
            } else if s < 0.75 {
                Command::Body { v: a, omega: 0.0 }
            } else {
                Command::Body { v: -a, omega: 0.0 }
            }
        }
        (RobotKind::Arm6Dof, TrajectoryKind::LineX) => Command::Cartesian([a * wave, 0.0, 0.0]),
        (RobotKind::Arm6Dof, TrajectoryKind::Circle2dWithChord) => {
            if s < 0.5 {
                let rate = 2.0 * TAU / p;
                let phi = rate * s * p;
                Command::Cartesian([-a * rate * phi.sin(), a * rate * phi.cos(), 0.0])
            } else if s < 0.75 {
                Command::Cartesian([-8.0 * a / p, 0.0, 0.0])
            } else {
                Command::Cartesian([8.0 * a / p, 0.0, 0.0])
            }
        }
        (RobotKind::Arm6Dof, TrajectoryKind::Circle3d) => {
            let rate = TAU / p;
            let phi = rate * s * p;
            Command::Cartesian([
                -a * rate * phi.sin(),
                a * rate * phi.cos(),
                a * rate * (2.0 * phi).cos(),
            ])
        }
        _ => unreachable!("filtered by supports()"),
    })
}
