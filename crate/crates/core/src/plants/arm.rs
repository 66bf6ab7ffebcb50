//! Six-joint serial arm described by standard Denavit–Hartenberg rows.
//!
//! Each joint contributes `Rz(θ + θ_offset) · Tz(d) · Tx(a) · Rx(α)`.
//! End-effector velocity comes from a forward finite difference of the
//! position kinematics over `fd_step` seconds.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix3, Matrix3x6, Matrix4, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const JOINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub const fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        DhRow {
            a,
            alpha,
            d,
            theta_offset,
        }
    }

    pub fn transform(&self, theta: f64) -> Matrix4<f64> {
        let (st, ct) = (theta + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Matrix4::new(
            ct,
            -st * ca,
            st * sa,
            self.a * ct,
            st,
            ct * ca,
            -ct * sa,
            self.a * st,
            0.0,
            sa,
            ca,
            self.d,
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmParams {
    pub dh: [DhRow; JOINTS],
    /// Finite-difference step `ΔT` in seconds.
    pub fd_step: f64,
    /// `[lower, upper]` per joint, radians.
    pub joint_limits: [[f64; 2]; JOINTS],
    pub initial_joints: [f64; JOINTS],
}

impl Default for ArmParams {
    /// A UR5-like geometry starting away from singular poses.
    fn default() -> Self {
        ArmParams {
            dh: [
                DhRow::new(0.0, FRAC_PI_2, 0.089159, 0.0),
                DhRow::new(-0.425, 0.0, 0.0, 0.0),
                DhRow::new(-0.39225, 0.0, 0.0, 0.0),
                DhRow::new(0.0, FRAC_PI_2, 0.10915, 0.0),
                DhRow::new(0.0, -FRAC_PI_2, 0.09465, 0.0),
                DhRow::new(0.0, 0.0, 0.0823, 0.0),
            ],
            fd_step: 0.01,
            joint_limits: [[-TAU, TAU]; JOINTS],
            initial_joints: [0.0, -1.2, 1.4, -1.6, -1.57, 0.0],
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::invalid("fd_step", format!("must be > 0, got {}", self.fd_step)));
        }
        let finite = self
            .dh
            .iter()
            .all(|r| [r.a, r.alpha, r.d, r.theta_offset].iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("dh", "DH rows must be finite"));
        }
        for (i, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::invalid(
                    "joint_limits",
                    format!("joint {i}: lower {lo} must be below upper {hi}"),
                ));
            }
        }
        if !self.within_limits(&self.initial_joints) {
            return Err(Error::invalid("initial_joints", "outside joint limits"));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64; JOINTS]) -> bool {
        q.iter()
            .zip(&self.joint_limits)
            .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    /// A single planar link of length `a` on joint 1; the other rows are
    /// identity transforms.
    pub fn single_link(a: f64) -> Self {
        let mut dh = [DhRow::default(); JOINTS];
        dh[0].a = a;
        ArmParams {
            dh,
            initial_joints: [0.0; JOINTS],
            ..ArmParams::default()
        }
    }
}

/// End-effector position. Joint-limit violations are logged, not fatal.
pub fn arm_fk(q: &[f64; JOINTS], p: &ArmParams) -> [f64; 3] {
    if !p.within_limits(q) {
        log::warn!("joint configuration {q:?} outside limits");
    }
    fk_position(q, p)
}

fn fk_position(q: &[f64; JOINTS], p: &ArmParams) -> [f64; 3] {
    let mut t = Matrix4::identity();
    for (row, &theta) in p.dh.iter().zip(q) {
        t *= row.transform(theta);
    }
    let o = t * Vector4::new(0.0, 0.0, 0.0, 1.0);
    [o[0], o[1], o[2]]
}

/// `(FK(θ + θ̇·ΔT) − FK(θ)) / ΔT + residual`.
pub fn fk_velocity(
    q: &[f64; JOINTS],
    qdot: &[f64; JOINTS],
    p: &ArmParams,
    residual: [f64; 3],
) -> [f64; 3] {
    let dt = p.fd_step;
    let mut ahead = *q;
    for (a, v) in ahead.iter_mut().zip(qdot) {
        *a += v * dt;
    }
    let p1 = fk_position(&ahead, p);
    let p0 = arm_fk(q, p);
    [
        (p1[0] - p0[0]) / dt + residual[0],
        (p1[1] - p0[1]) / dt + residual[1],
        (p1[2] - p0[2]) / dt + residual[2],
    ]
}

/// Central-difference position Jacobian, used to map Cartesian trajectory
/// velocities onto joint velocities.
pub fn position_jacobian(q: &[f64; JOINTS], p: &ArmParams) -> Matrix3x6<f64> {
    const H: f64 = 1e-6;
    let mut j = Matrix3x6::zeros();
    for c in 0..JOINTS {
        let mut plus = *q;
        let mut minus = *q;
        plus[c] += H;
        minus[c] -= H;
        let a = fk_position(&plus, p);
        let b = fk_position(&minus, p);
        for r in 0..3 {
            j[(r, c)] = (a[r] - b[r]) / (2.0 * H);
        }
    }
    j
}

/// Damped least-squares joint velocities realizing Cartesian velocity `v`.
pub fn joint_rates_for(q: &[f64; JOINTS], v: [f64; 3], p: &ArmParams) -> [f64; JOINTS] {
    const DAMPING: f64 = 1e-2;
    let j = position_jacobian(q, p);
    let jjt = j * j.transpose() + Matrix3::identity() * (DAMPING * DAMPING);
    let rhs = Vector3::from(v);
    let y = jjt
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(Vector3::zeros);
    let qd: Vector6<f64> = j.transpose() * y;
    let mut out = [0.0; JOINTS];
    out.copy_from_slice(qd.as_slice());
    out
}
