//! Differential-drive kinematics.
//!
//! ```text
//! ẋ = (R/2)·V·cosΘ·(u_l + u_r)
//! ẏ = (R/2)·V·sinΘ·(u_l + u_r)
//! Θ̇ = (R/L_w)·(u_r − u_l)
//! ```
//!
//! The yaw row carries no `V` factor.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffDriveParams {
    /// Wheel radius `R` in metres.
    pub wheel_radius: f64,
    /// Distance between the wheels `L_w` in metres.
    pub wheel_base: f64,
    /// Wheel angular speed scale `V` in rad/s.
    pub wheel_speed_scale: f64,
}

impl Default for DiffDriveParams {
    fn default() -> Self {
        DiffDriveParams {
            wheel_radius: 0.03,
            wheel_base: 0.10,
            wheel_speed_scale: 10.0,
        }
    }
}

impl DiffDriveParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wheel_radius", self.wheel_radius),
            ("wheel_base", self.wheel_base),
            ("wheel_speed_scale", self.wheel_speed_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest forward speed reachable with both wheels at full command.
    pub fn max_speed(&self) -> f64 {
        self.wheel_radius * self.wheel_speed_scale
    }

    /// Largest yaw rate reachable when spinning in place.
    pub fn max_yaw_rate(&self) -> f64 {
        2.0 * self.wheel_radius / self.wheel_base
    }
}

/// Left/right wheel commands in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelCommand {
    pub left: f64,
    pub right: f64,
}

impl WheelCommand {
    pub fn new(left: f64, right: f64) -> Self {
        WheelCommand { left, right }.clamped()
    }

    pub fn clamped(self) -> Self {
        WheelCommand {
            left: self.left.clamp(-1.0, 1.0),
            right: self.right.clamp(-1.0, 1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.left, self.right]
    }
}

pub fn diff_drive_rate(
    theta: f64,
    cmd: WheelCommand,
    p: &DiffDriveParams,
    residual: [f64; 3],
) -> [f64; 3] {
    let u = cmd.clamped();
    let sum = u.left + u.right;
    let forward = 0.5 * p.wheel_radius * p.wheel_speed_scale * sum;
    [
        forward * theta.cos() + residual[0],
        forward * theta.sin() + residual[1],
        p.wheel_radius / p.wheel_base * (u.right - u.left) + residual[2],
    ]
}

/// Wheel commands that realize body speed `v` and yaw rate `omega` under the
/// base model, clamped to the command bounds.
pub fn wheels_for(v: f64, omega: f64, p: &DiffDriveParams) -> WheelCommand {
    let sum = 2.0 * v / (p.wheel_radius * p.wheel_speed_scale);
    let diff = omega * p.wheel_base / p.wheel_radius;
    WheelCommand::new(0.5 * (sum - diff), 0.5 * (sum + diff))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}
