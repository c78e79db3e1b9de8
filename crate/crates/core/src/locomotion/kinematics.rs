//! Three-DoF leg: abad (roll about body x), hip pitch, knee pitch.
//!
//! Positions are expressed in the hip frame: origin at the abad joint, axes
//! parallel to the body frame. With all joints at zero the leg hangs straight
//! down from the abad offset: `p = (0, side·l₀, −(l₁ + l₂))`. The knee bends
//! backward, so a bent knee has `q_knee < 0` and positive knee torque extends
//! it.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which the Jacobian counts as singular.
pub const SINGULARITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegGeometry {
    pub abad_offset: f64,
    pub upper: f64,
    pub lower: f64,
    pub knee_min: f64,
    pub knee_max: f64,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            abad_offset: 0.062,
            upper: 0.209,
            lower: 0.195,
            knee_min: -2.8,
            knee_max: -0.05,
        }
    }
}

/// Leg configuration: geometry, side and joint state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegKinematics {
    pub geometry: LegGeometry,
    /// +1 for left legs, −1 for right legs.
    pub side: f64,
    /// `(q_abad, q_hip, q_knee)`
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

impl LegKinematics {
    pub fn new(geometry: LegGeometry, side: f64, q: Vector3<f64>, qd: Vector3<f64>) -> Self {
        Self { geometry, side, q, qd }
    }

    /// Configuration reaching `foot` (hip frame) with the knee-backward
    /// branch. Unreachable targets are projected onto the workspace and the
    /// knee is clamped to its limits; the flag is `false` when that happened.
    pub fn inverse(geometry: LegGeometry, side: f64, foot: &Vector3<f64>) -> (Vector3<f64>, bool) {
        let LegGeometry {
            abad_offset: l0,
            upper: l1,
            lower: l2,
            ..
        } = geometry;
        let mut exact = true;
        let yz2 = foot.y * foot.y + foot.z * foot.z;
        let sagittal2 = yz2 - l0 * l0;
        if sagittal2 < 0.0 {
            exact = false;
        }
        let z_s = -sagittal2.max(0.0).sqrt();
        let q0 = foot.z.atan2(foot.y) - z_s.atan2(side * l0);

        let (a, b) = (-foot.x, -z_s);
        let d2 = a * a + b * b;
        let mut cos_knee = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0..=1.0).contains(&cos_knee) {
            exact = false;
            cos_knee = cos_knee.clamp(-1.0, 1.0);
        }
        let mut q2 = -cos_knee.acos();
        if q2 < geometry.knee_min || q2 > geometry.knee_max {
            exact = false;
            q2 = q2.clamp(geometry.knee_min, geometry.knee_max);
        }
        let q1 = a.atan2(b) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        (Vector3::new(wrap(q0), q1, q2), exact)
    }

    /// Forward kinematics in the hip frame.
    pub fn foot_position(&self) -> Vector3<f64> {
        let (x, zs) = self.sagittal();
        let y0 = self.side * self.geometry.abad_offset;
        let (s0, c0) = self.q.x.sin_cos();
        Vector3::new(x, y0 * c0 - zs * s0, y0 * s0 + zs * c0)
    }

    // foot position in the rotated sagittal plane, before the abad rotation
    fn sagittal(&self) -> (f64, f64) {
        let LegGeometry { upper: l1, lower: l2, .. } = self.geometry;
        let (q1, q12) = (self.q.y, self.q.y + self.q.z);
        (-l1 * q1.sin() - l2 * q12.sin(), -l1 * q1.cos() - l2 * q12.cos())
    }

    /// `∂p/∂q`
    pub fn jacobian(&self) -> Matrix3<f64> {
        let l2 = self.geometry.lower;
        let (x, zs) = self.sagittal();
        let p = self.foot_position();
        let (s0, c0) = self.q.x.sin_cos();
        let (s12, c12) = (self.q.y + self.q.z).sin_cos();
        Matrix3::new(
            0.0, zs, -l2 * c12,
            -p.z, s0 * x, -s0 * l2 * s12,
            p.y, -c0 * x, c0 * l2 * s12,
        )
    }

    pub fn foot_velocity(&self) -> Vector3<f64> {
        self.jacobian() * self.qd
    }

    fn checked_jacobian(&self) -> Result<Matrix3<f64>> {
        let j = self.jacobian();
        let det = j.determinant();
        if det.abs() <= SINGULARITY_EPS {
            return Err(Error::Singular { det });
        }
        Ok(j)
    }

    /// Joint velocities producing a hip-frame foot velocity.
    pub fn joint_velocity_for(&self, foot_velocity: &Vector3<f64>) -> Result<Vector3<f64>> {
        let j = self.checked_jacobian()?;
        j.lu().solve(foot_velocity).ok_or(Error::Singular { det: j.determinant() })
    }
}

fn wrap(angle: f64) -> f64 {
    (angle + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

/// Cartesian impedance law `τ = Jᵀ (Kp (p_des − p) + Kd (v_des − J q̇))`.
pub fn impedance_torques(
    kin: &LegKinematics,
    p_des: &Vector3<f64>,
    v_des: &Vector3<f64>,
    kp: &Matrix3<f64>,
    kd: &Matrix3<f64>,
) -> Result<Vector3<f64>> {
    let j = kin.checked_jacobian()?;
    let force = kp * (p_des - kin.foot_position()) + kd * (v_des - j * kin.qd);
    Ok(j.transpose() * force)
}

/// Joint torques realizing the ground-reaction force `grf` (world frame, the
/// force the ground applies to the body). The foot pushes on the ground with
/// `−grf`, so `τ = Jᵀ Rᵀ (−grf)`.
pub fn stance_torques(kin: &LegKinematics, rotation: &Matrix3<f64>, grf: &Vector3<f64>) -> Result<Vector3<f64>> {
    let j = kin.checked_jacobian()?;
    Ok(j.transpose() * (rotation.transpose() * -grf))
}
