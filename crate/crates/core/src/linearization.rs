//! Yaw-parameterized linear model of the rigid body and its discretization.
//!
//! State layout (13 entries):
//!
//! ```text
//! x = [Θ (roll, pitch, yaw) | p | ω | ṗ | 1]
//! ```
//!
//! The printed form of this model lists `p̂` twice; the fourth block is the
//! linear velocity `ṗ`, the only reading for which the dimensions work. The
//! trailing constant state carries gravity, so the affine model
//! `ẋ = A x + B u + (0, 0, 0, −g)` becomes the homogeneous `ẋ = A x + B u`.
//!
//! About roll = pitch = 0 the ZYX Euler rates are `Θ̇ = R_z(ψ)ᵀ ω`. The angular
//! rows drop the gyroscopic term `ω × (I ω)`, which vanishes to first order
//! about `ω = 0`, and freeze the inertia at `Î = R_z(ψ) I R_z(ψ)ᵀ`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::dynamics::{rot_z, skew, BodyParams, ContactSet};
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 13;
pub const NUM_LEGS: usize = 4;
/// Force components per leg.
pub const LEG_INPUTS: usize = 3;
pub const INPUT_DIM: usize = NUM_LEGS * LEG_INPUTS;

pub const IDX_THETA: usize = 0;
pub const IDX_POS: usize = 3;
pub const IDX_OMEGA: usize = 6;
pub const IDX_VEL: usize = 9;
pub const IDX_GRAVITY: usize = 12;

/// Largest MPC step accepted by [`discretize`].
pub const MAX_MPC_DT: f64 = 0.1;

/// Continuous model and, once [`discretize`]d, its zero-order-hold counterpart.
///
/// Inputs are the stacked world-frame forces of all four legs in leg order,
/// so the input dimension does not change across a gait cycle. Legs out of
/// contact keep their columns (evaluated at their planned footholds); the MPC
/// pins their forces to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub a_d: Option<DMatrix<f64>>,
    pub b_d: Option<DMatrix<f64>>,
    pub dt: Option<f64>,
    pub yaw: f64,
    /// `rᵢ = footᵢ − p` for each leg, world frame.
    pub foot_vectors: [Vector3<f64>; NUM_LEGS],
}

impl LinearModel {
    pub fn is_discretized(&self) -> bool {
        self.a_d.is_some() && self.b_d.is_some()
    }

    /// `x⁺ = Â x + B̂ u`
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.a_d.as_ref()? * x + self.b_d.as_ref()? * u)
    }
}

/// Continuous linear model about roll = pitch = 0 at the given yaw.
///
/// `com` is the CoM position used to form the foot vectors.
pub fn build_continuous(
    params: &BodyParams,
    yaw: f64,
    com: &Vector3<f64>,
    feet: &ContactSet,
) -> Result<LinearModel> {
    if feet.contact_count() == 0 {
        return Err(Error::NoContacts);
    }
    let rz = rot_z(yaw);
    let inertia = rz * params.inertia * rz.transpose();
    let inertia_inv = inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidConfig("inertia is singular".into()))?;

    let mut a = DMatrix::zeros(STATE_DIM, STATE_DIM);
    a.fixed_view_mut::<3, 3>(IDX_THETA, IDX_OMEGA)
        .copy_from(&rz.transpose());
    a.fixed_view_mut::<3, 3>(IDX_POS, IDX_VEL)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 1>(IDX_VEL, IDX_GRAVITY)
        .copy_from(&(-params.gravity));

    let foot_vectors = feet.foot_positions().map(|f| f - com);
    let mut b = DMatrix::zeros(STATE_DIM, INPUT_DIM);
    for (leg, r) in foot_vectors.iter().enumerate() {
        let col = leg * LEG_INPUTS;
        b.fixed_view_mut::<3, 3>(IDX_OMEGA, col)
            .copy_from(&(inertia_inv * skew(r)));
        b.fixed_view_mut::<3, 3>(IDX_VEL, col)
            .copy_from(&(Matrix3::identity() / params.mass));
    }

    Ok(LinearModel {
        a_c: a,
        b_c: b,
        a_d: None,
        b_d: None,
        dt: None,
        yaw,
        foot_vectors,
    })
}

/// Exact zero-order hold of `(A, B)` over `dt`.
///
/// `exp([[A, B], [0, 0]]·dt) = [[Â, B̂], [0, I]]`.
pub fn zero_order_hold(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

/// Fills the discrete part of `model` for step `dt`.
pub fn discretize(mut model: LinearModel, dt: f64) -> Result<LinearModel> {
    if !(dt > 0.0 && dt <= MAX_MPC_DT) {
        return Err(Error::StepSize { dt, max: MAX_MPC_DT });
    }
    let (a_d, b_d) = zero_order_hold(&model.a_c, &model.b_c, dt);
    model.a_d = Some(a_d);
    model.b_d = Some(b_d);
    model.dt = Some(dt);
    Ok(model)
}

/// Packs a robot state into the 13-entry linear-model state.
pub fn state_vector(state: &crate::dynamics::RobotState) -> DVector<f64> {
    let mut x = DVector::zeros(STATE_DIM);
    x.fixed_rows_mut::<3>(IDX_THETA).copy_from(&state.euler());
    x.fixed_rows_mut::<3>(IDX_POS).copy_from(&state.position);
    x.fixed_rows_mut::<3>(IDX_OMEGA)
        .copy_from(&state.angular_velocity);
    x.fixed_rows_mut::<3>(IDX_VEL)
        .copy_from(&state.linear_velocity);
    x[IDX_GRAVITY] = 1.0;
    x
}
