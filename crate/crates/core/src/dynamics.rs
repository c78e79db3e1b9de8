//! Single-rigid-body model of the quadruped.
//!
//! The legs are massless; each stance foot applies a world-frame force `fᵢ`
//! at its contact point. With `p` the CoM position, `ω` the world-frame
//! angular velocity and `R` the body→world rotation:
//!
//! ```text
//! p̈          = Σ fᵢ / m − g
//! d(I_w ω)/dt = Σ rᵢ × fᵢ,        rᵢ = footᵢ − p,  I_w = R I_body Rᵀ
//! Ṙ          = [ω]× R
//! ```
//!
//! The angular equation is integrated in the expanded form
//! `I_w ω̇ + ω × (I_w ω) = Σ rᵢ × fᵢ`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest step accepted by [`integrate_step`].
pub const MAX_SIM_DT: f64 = 0.01;

/// Leg index convention used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    FL = 0,
    FR = 1,
    RL = 2,
    RR = 3,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FL, Leg::FR, Leg::RL, Leg::RR];

    pub fn index(self) -> usize {
        self as usize
    }

    /// +1 for left legs, −1 for right legs.
    pub fn side(self) -> f64 {
        match self {
            Leg::FL | Leg::RL => 1.0,
            Leg::FR | Leg::RR => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Leg::FL => "FL",
            Leg::FR => "FR",
            Leg::RL => "RL",
            Leg::RR => "RR",
        }
    }
}

/// `[v]×`, the matrix with `skew(v) * y == v.cross(&y)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation about the world z axis.
pub fn rot_z(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues formula for `exp([θ]×)`.
pub fn so3_exp(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle = theta.norm();
    let k = skew(theta);
    if angle < 1e-8 {
        // second-order series; the next term is O(angle³)
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = angle.sin() / angle;
    let b = (1.0 - angle.cos()) / (angle * angle);
    Matrix3::identity() + a * k + b * k * k
}

/// Rotation matrix from ZYX Euler angles `(roll, pitch, yaw)`:
/// `R = R_z(yaw) R_y(pitch) R_x(roll)`.
pub fn rotation_from_euler(rpy: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z).into_inner()
}

/// Gram-Schmidt re-orthonormalization keeping the first column's direction.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y = r.column(1) - x * x.dot(&r.column(1));
    let y = y.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Physical parameters of the rigid body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyParams {
    pub mass: f64,
    /// Body-frame inertia tensor.
    pub inertia: Matrix3<f64>,
    /// Gravity as a positive-magnitude vector; it is subtracted in `p̈`.
    pub gravity: Vector3<f64>,
    /// Hip (abad joint) positions in the body frame, in [`Leg`] order.
    pub hip_offsets: [Vector3<f64>; 4],
}

impl Default for BodyParams {
    /// A 9 kg Mini-Cheetah-class body.
    fn default() -> Self {
        Self {
            mass: 9.0,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.07, 0.26, 0.242)),
            gravity: Vector3::new(0.0, 0.0, 9.81),
            hip_offsets: [
                Vector3::new(0.19, 0.049, 0.0),
                Vector3::new(0.19, -0.049, 0.0),
                Vector3::new(-0.19, 0.049, 0.0),
                Vector3::new(-0.19, -0.049, 0.0),
            ],
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("mass must be positive, got {}", self.mass)));
        }
        let asym = (self.inertia - self.inertia.transpose()).amax();
        if asym > 1e-12 * self.inertia.amax().max(1.0) {
            return Err(Error::InvalidConfig("inertia must be symmetric".into()));
        }
        let eig = self.inertia.symmetric_eigenvalues();
        if eig.iter().any(|&e| e <= 0.0) {
            return Err(Error::InvalidConfig("inertia must be positive definite".into()));
        }
        Ok(())
    }

    /// Copy with mass and inertia scaled independently.
    pub fn scaled(&self, mass_scale: f64, inertia_scale: f64) -> Self {
        Self {
            mass: self.mass * mass_scale,
            inertia: self.inertia * inertia_scale,
            ..self.clone()
        }
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity.norm()
    }
}

/// Full floating-base state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// Body→world rotation.
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    /// World frame.
    pub angular_velocity: Vector3<f64>,
    pub linear_velocity: Vector3<f64>,
}

impl RobotState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            position,
            angular_velocity: Vector3::zeros(),
            linear_velocity: Vector3::zeros(),
        }
    }

    pub fn from_euler(rpy: Vector3<f64>, position: Vector3<f64>) -> Self {
        Self {
            rotation: rotation_from_euler(&rpy),
            ..Self::at_rest(position)
        }
    }

    /// ZYX Euler angles `(roll, pitch, yaw)`.
    pub fn euler(&self) -> Vector3<f64> {
        let r = &self.rotation;
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Vector3::new(roll, pitch, yaw)
    }

    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// `‖RᵀR − I‖∞`
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn world_inertia(&self, params: &BodyParams) -> Matrix3<f64> {
        self.rotation * params.inertia * self.rotation.transpose()
    }

    /// `I_w ω`
    pub fn angular_momentum(&self, params: &BodyParams) -> Vector3<f64> {
        self.world_inertia(params) * self.angular_velocity
    }

    /// Kinetic plus gravitational potential energy.
    pub fn energy(&self, params: &BodyParams) -> f64 {
        let w = &self.angular_velocity;
        0.5 * params.mass * self.linear_velocity.norm_squared()
            + 0.5 * w.dot(&(self.world_inertia(params) * w))
            + params.mass * params.gravity.dot(&self.position)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.position.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
    }
}

/// Foot positions and applied ground-reaction forces.
///
/// Forces of legs not in contact are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    foot_positions: [Vector3<f64>; 4],
    in_contact: [bool; 4],
    forces: [Vector3<f64>; 4],
}

impl ContactSet {
    /// Forces supplied for swing legs are discarded.
    pub fn new(
        foot_positions: [Vector3<f64>; 4],
        in_contact: [bool; 4],
        forces: [Vector3<f64>; 4],
    ) -> Self {
        let mut forces = forces;
        for (f, &c) in forces.iter_mut().zip(&in_contact) {
            if !c {
                *f = Vector3::zeros();
            }
        }
        Self {
            foot_positions,
            in_contact,
            forces,
        }
    }

    /// All feet airborne, no forces.
    pub fn none() -> Self {
        Self::new([Vector3::zeros(); 4], [false; 4], [Vector3::zeros(); 4])
    }

    pub fn foot_positions(&self) -> &[Vector3<f64>; 4] {
        &self.foot_positions
    }

    pub fn in_contact(&self) -> &[bool; 4] {
        &self.in_contact
    }

    pub fn forces(&self) -> &[Vector3<f64>; 4] {
        &self.forces
    }

    pub fn contact_count(&self) -> usize {
        self.in_contact.iter().filter(|&&c| c).count()
    }

    pub fn total_force(&self) -> Vector3<f64> {
        self.forces.iter().sum()
    }

    /// `Σ (footᵢ − com) × fᵢ`
    pub fn moment_about(&self, com: &Vector3<f64>) -> Vector3<f64> {
        self.foot_positions
            .iter()
            .zip(&self.forces)
            .map(|(foot, f)| (foot - com).cross(f))
            .sum()
    }
}

/// Time derivative of a [`RobotState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
    pub linear_acceleration: Vector3<f64>,
}

fn accelerations(
    rotation: &Matrix3<f64>,
    position: &Vector3<f64>,
    omega: &Vector3<f64>,
    params: &BodyParams,
    contacts: &ContactSet,
) -> (Vector3<f64>, Vector3<f64>) {
    let linear = contacts.total_force() / params.mass - params.gravity;
    let inertia_w = rotation * params.inertia * rotation.transpose();
    let moment = contacts.moment_about(position);
    let rhs = moment - omega.cross(&(inertia_w * omega));
    let angular = inertia_w
        .cholesky()
        .map(|c| c.solve(&rhs))
        .expect("BodyParams inertia must be positive definite");
    (angular, linear)
}

/// Nonlinear rigid-body dynamics.
pub fn rigid_body_derivative(
    state: &RobotState,
    params: &BodyParams,
    contacts: &ContactSet,
) -> StateDerivative {
    let (angular, linear) = accelerations(
        &state.rotation,
        &state.position,
        &state.angular_velocity,
        params,
        contacts,
    );
    StateDerivative {
        rotation: skew(&state.angular_velocity) * state.rotation,
        position: state.linear_velocity,
        angular_acceleration: angular,
        linear_acceleration: linear,
    }
}

// Inverse of the left-trivialized dexp on so(3), truncated after the second
// bracket, which is enough for a fourth-order Munthe-Kaas scheme.
fn dexp_inv(theta: &Vector3<f64>, u: &Vector3<f64>) -> Vector3<f64> {
    let tu = theta.cross(u);
    u - 0.5 * tu + theta.cross(&tu) / 12.0
}

/// One RK4 step with contacts (and hence forces) held constant.
///
/// Translation and angular velocity follow the classical RK4 tableau; the
/// rotation is advanced on SO(3) by the Munthe-Kaas variant of the same
/// tableau, so the update is always `R⁺ = exp([θ]×) R`. A constant `ω`
/// gives `θ = ω dt` exactly. The result is re-orthonormalized.
pub fn integrate_step(
    state: &RobotState,
    params: &BodyParams,
    contacts: &ContactSet,
    dt: f64,
) -> Result<RobotState> {
    if !(dt > 0.0 && dt <= MAX_SIM_DT) {
        return Err(Error::StepSize { dt, max: MAX_SIM_DT });
    }
    let r0 = state.rotation;
    let p0 = state.position;
    let v0 = state.linear_velocity;
    let w0 = state.angular_velocity;

    let eval = |theta: &Vector3<f64>, p: &Vector3<f64>, v: &Vector3<f64>, w: &Vector3<f64>| {
        let rot = so3_exp(theta) * r0;
        let (alpha, acc) = accelerations(&rot, p, w, params, contacts);
        // (θ increment, ṗ, v̇, ω̇), all scaled by dt
        (dt * dexp_inv(theta, w), dt * v, dt * acc, dt * alpha)
    };

    let zero = Vector3::zeros();
    let (k1t, k1p, k1v, k1w) = eval(&zero, &p0, &v0, &w0);
    let (k2t, k2p, k2v, k2w) = eval(&(0.5 * k1t), &(p0 + 0.5 * k1p), &(v0 + 0.5 * k1v), &(w0 + 0.5 * k1w));
    let (k3t, k3p, k3v, k3w) = eval(&(0.5 * k2t), &(p0 + 0.5 * k2p), &(v0 + 0.5 * k2v), &(w0 + 0.5 * k2w));
    let (k4t, k4p, k4v, k4w) = eval(&k3t, &(p0 + k3p), &(v0 + k3v), &(w0 + k3w));

    let theta = (k1t + 2.0 * k2t + 2.0 * k3t + k4t) / 6.0;
    Ok(RobotState {
        rotation: orthonormalize(&(so3_exp(&theta) * r0)),
        position: p0 + (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0,
        linear_velocity: v0 + (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0,
        angular_velocity: w0 + (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0,
    })
}
