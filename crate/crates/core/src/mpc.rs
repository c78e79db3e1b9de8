//! Finite-horizon MPC over the discrete linear model, condensed to a QP.
//!
//! With states `x(1..N)` eliminated through
//! `x(k) = Âᵏ x₀ + Σⱼ Â^(k−1−j) B̂ u(j)`, i.e. `X = A_qp x₀ + B_qp U`, the
//! quadratic cost `Σ ‖x(k) − x_ref(k)‖²_Q + ‖u(k−1)‖²_R` becomes
//!
//! ```text
//! H = 2 (B_qpᵀ Q̄ B_qp + R̄)
//! g = 2 B_qpᵀ Q̄ (A_qp x₀ − X_ref)
//! ```
//!
//! Every leg owns five constraint rows per step (the friction pyramid and
//! the vertical force range). For a leg in swing the same rows are pinned to
//! zero, so the QP has the same shape at every point of the gait cycle.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rot_z, RobotState};
use crate::error::{Error, Result};
use crate::linearization::{
    LinearModel, IDX_GRAVITY, IDX_OMEGA, IDX_POS, IDX_THETA, IDX_VEL, INPUT_DIM, LEG_INPUTS, NUM_LEGS,
    STATE_DIM,
};
use crate::qp::QpProblem;

/// Constraint rows per leg per step.
pub const ROWS_PER_LEG: usize = 5;

/// Commanded body twist: planar velocity in the heading frame and yaw rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self { vx, vy, yaw_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal of `Q`, in state order.
    pub state_weights: [f64; STATE_DIM],
    /// Diagonal of `R` for the `(x, y, z)` force axes of every leg.
    pub input_weights: [f64; 3],
    /// Upper bound on vertical force, N.
    pub u_max: f64,
    /// Lower bound on vertical force of stance legs, N.
    pub f_min: f64,
    pub mu: f64,
    /// Optional `|x(k)ᵢ| ≤ x_maxᵢ` rows; infinite entries are skipped.
    #[serde(default)]
    pub state_limits: Option<[f64; STATE_DIM]>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.025,
            state_weights: [
                0.25, 0.25, 10.0, // roll pitch yaw
                2.0, 2.0, 50.0, // position
                0.0, 0.0, 0.3, // angular velocity
                0.2, 0.2, 0.1, // linear velocity
                0.0,
            ],
            input_weights: [1e-6; 3],
            u_max: 150.0,
            f_min: 0.0,
            mu: 0.6,
            state_limits: None,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.horizon == 0 {
            return bad("mpc horizon must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("mpc dt must be positive");
        }
        let weights = self.state_weights.iter().chain(&self.input_weights);
        if weights.clone().any(|w| !(*w >= 0.0)) {
            return bad("mpc weights must be non-negative");
        }
        if !weights.clone().any(|w| *w > 0.0) {
            return bad("at least one mpc weight must be positive");
        }
        if !(self.f_min >= 0.0 && self.f_min < self.u_max) {
            return bad("mpc force bounds need 0 <= f_min < u_max");
        }
        if !(self.mu > 0.0) {
            return bad("friction coefficient must be positive");
        }
        Ok(())
    }
}

/// Per-step desired states `x_ref(1..N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub states: Vec<DVector<f64>>,
}

impl ReferenceTrajectory {
    pub fn new(states: Vec<DVector<f64>>) -> Result<Self> {
        for s in &states {
            if s.len() != STATE_DIM {
                return Err(Error::DimensionMismatch {
                    what: "reference state",
                    expected: STATE_DIM,
                    got: s.len(),
                });
            }
            if s[IDX_GRAVITY] != 1.0 {
                return Err(Error::InvalidConfig("reference gravity entry must be 1".into()));
            }
        }
        Ok(Self { states })
    }

    /// Level body at `height`, yaw integrating the commanded yaw rate and
    /// planar position integrating the commanded velocity from the current
    /// position.
    pub fn constant_twist(state: &RobotState, cmd: &Twist, height: f64, horizon: usize, dt: f64) -> Self {
        let yaw0 = state.yaw();
        let mut pos = state.position;
        let states = (1..=horizon)
            .map(|k| {
                let yaw = yaw0 + cmd.yaw_rate * k as f64 * dt;
                let vel = rot_z(yaw) * Vector3::new(cmd.vx, cmd.vy, 0.0);
                pos += vel * dt;
                let mut x = DVector::zeros(STATE_DIM);
                x[IDX_THETA + 2] = yaw;
                x[IDX_POS] = pos.x;
                x[IDX_POS + 1] = pos.y;
                x[IDX_POS + 2] = height;
                x[IDX_OMEGA + 2] = cmd.yaw_rate;
                x[IDX_VEL] = vel.x;
                x[IDX_VEL + 1] = vel.y;
                x[IDX_GRAVITY] = 1.0;
                x
            })
            .collect();
        Self { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// The five rows acting on one leg's `(f_x, f_y, f_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionBlock {
    pub c: SMatrix<f64, ROWS_PER_LEG, 3>,
    pub lower: [f64; ROWS_PER_LEG],
    pub upper: [f64; ROWS_PER_LEG],
}

impl FrictionBlock {
    /// `l − Cf` and `Cf − u`, the most negative value marks the tightest row.
    pub fn margins(&self, f: &Vector3<f64>) -> [f64; ROWS_PER_LEG] {
        let cf = self.c * f;
        std::array::from_fn(|i| (cf[i] - self.lower[i]).min(self.upper[i] - cf[i]))
    }

    pub fn contains(&self, f: &Vector3<f64>, tol: f64) -> bool {
        self.margins(f).iter().all(|&m| m >= -tol)
    }

    /// Rows pinning all three force components to zero.
    pub fn swing(mu: f64) -> Self {
        Self {
            lower: [0.0; ROWS_PER_LEG],
            upper: [0.0; ROWS_PER_LEG],
            ..friction_rows(mu, 0.0, 1.0)
        }
    }
}

/// Four-face friction pyramid plus vertical force range for a stance leg:
///
/// ```text
/// f_min ≤ f_z ≤ u_max
/// f_x − μ f_z ≤ 0 ≤ f_x + μ f_z
/// f_y − μ f_z ≤ 0 ≤ f_y + μ f_z
/// ```
pub fn friction_rows(mu: f64, f_min: f64, u_max: f64) -> FrictionBlock {
    #[rustfmt::skip]
    let c = SMatrix::<f64, ROWS_PER_LEG, 3>::from_row_slice(&[
        0.0, 0.0, 1.0,
        1.0, 0.0, -mu,
        1.0, 0.0, mu,
        0.0, 1.0, -mu,
        0.0, 1.0, mu,
    ]);
    let inf = f64::INFINITY;
    FrictionBlock {
        c,
        lower: [f_min, -inf, 0.0, -inf, 0.0],
        upper: [u_max, 0.0, inf, 0.0, inf],
    }
}

/// Condensed QP together with the contact table it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub qp: QpProblem,
    pub contacts: Vec<[bool; NUM_LEGS]>,
    /// `A_qp`, stacked `Âᵏ` for `k = 1..N`.
    pub a_qp: DMatrix<f64>,
    /// `B_qp`, block lower-triangular input-to-state map.
    pub b_qp: DMatrix<f64>,
}

impl MpcProblem {
    pub fn horizon(&self) -> usize {
        self.contacts.len()
    }

    /// Forces of step `k` in leg order; swing legs are exactly zero.
    pub fn forces_at(&self, u: &DVector<f64>, k: usize) -> [Vector3<f64>; NUM_LEGS] {
        std::array::from_fn(|leg| {
            if self.contacts[k][leg] {
                let i = k * INPUT_DIM + leg * LEG_INPUTS;
                Vector3::new(u[i], u[i + 1], u[i + 2])
            } else {
                Vector3::zeros()
            }
        })
    }

    /// Predicted states `x(1..N)` for a decision vector.
    pub fn predict(&self, x0: &DVector<f64>, u: &DVector<f64>) -> Vec<DVector<f64>> {
        let stacked = &self.a_qp * x0 + &self.b_qp * u;
        (0..self.horizon())
            .map(|k| stacked.rows(k * STATE_DIM, STATE_DIM).into_owned())
            .collect()
    }
}

/// Builds and condenses the MPC problem.
pub fn build_mpc(
    model: &LinearModel,
    contacts: &[[bool; NUM_LEGS]],
    reference: &ReferenceTrajectory,
    cfg: &MpcConfig,
    x0: &DVector<f64>,
) -> Result<MpcProblem> {
    cfg.validate()?;
    let n = cfg.horizon;
    let (a_d, b_d) = match (&model.a_d, &model.b_d, model.dt) {
        (Some(a), Some(b), Some(dt)) => {
            if (dt - cfg.dt).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "model discretized at {dt} s but mpc dt is {} s",
                    cfg.dt
                )));
            }
            (a, b)
        }
        _ => return Err(Error::InvalidConfig("linear model is not discretized".into())),
    };
    let checks = [
        ("contact table", n, contacts.len()),
        ("reference trajectory", n, reference.len()),
        ("initial state", STATE_DIM, x0.len()),
        ("model inputs", INPUT_DIM, b_d.ncols()),
        ("model states", STATE_DIM, a_d.nrows()),
    ];
    for (what, expected, got) in checks {
        if expected != got {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
    }
    for (k, step) in contacts.iter().enumerate() {
        if step.iter().all(|c| !c) {
            log::warn!("mpc step {k} has every leg in swing; the body is ballistic there");
        }
    }

    let nx = STATE_DIM;
    let nu = INPUT_DIM;

    // powers Â⁰..Âᴺ
    let mut powers = Vec::with_capacity(n + 1);
    powers.push(DMatrix::identity(nx, nx));
    for k in 1..=n {
        powers.push(a_d * &powers[k - 1]);
    }
    let mut a_qp = DMatrix::zeros(nx * n, nx);
    let mut b_qp = DMatrix::zeros(nx * n, nu * n);
    let ab: Vec<DMatrix<f64>> = powers.iter().take(n).map(|p| p * b_d).collect();
    for k in 0..n {
        a_qp.view_mut((k * nx, 0), (nx, nx)).copy_from(&powers[k + 1]);
        for j in 0..=k {
            b_qp.view_mut((k * nx, j * nu), (nx, nu)).copy_from(&ab[k - j]);
        }
    }

    let q_diag = DVector::from_fn(nx * n, |i, _| cfg.state_weights[i % nx]);
    let r_diag = DVector::from_fn(nu * n, |i, _| cfg.input_weights[i % LEG_INPUTS]);
    let x_ref = DVector::from_fn(nx * n, |i, _| reference.states[i / nx][i % nx]);

    let qb = DMatrix::from_fn(nx * n, nu * n, |i, j| q_diag[i] * b_qp[(i, j)]);
    let mut h = b_qp.transpose() * &qb;
    for i in 0..nu * n {
        h[(i, i)] += r_diag[i];
    }
    h *= 2.0;
    let h = (&h + h.transpose()) * 0.5;
    let err = &a_qp * x0 - &x_ref;
    let g = 2.0 * qb.transpose() * err;

    let limit_rows: Vec<(usize, f64)> = match &cfg.state_limits {
        Some(limits) => (0..nx * n)
            .filter(|i| limits[i % nx].is_finite())
            .map(|i| (i, limits[i % nx]))
            .collect(),
        None => Vec::new(),
    };

    let rows = n * NUM_LEGS * ROWS_PER_LEG + limit_rows.len();
    let mut c = DMatrix::zeros(rows, nu * n);
    let mut lower = DVector::zeros(rows);
    let mut upper = DVector::zeros(rows);
    let stance = friction_rows(cfg.mu, cfg.f_min, cfg.u_max);
    let swing = FrictionBlock::swing(cfg.mu);
    for (k, step) in contacts.iter().enumerate() {
        for (leg, &in_contact) in step.iter().enumerate() {
            let block = if in_contact { &stance } else { &swing };
            let row = (k * NUM_LEGS + leg) * ROWS_PER_LEG;
            let col = k * nu + leg * LEG_INPUTS;
            c.view_mut((row, col), (ROWS_PER_LEG, 3)).copy_from(&block.c);
            for r in 0..ROWS_PER_LEG {
                lower[row + r] = block.lower[r];
                upper[row + r] = block.upper[r];
            }
        }
    }
    let free = &a_qp * x0;
    let base = n * NUM_LEGS * ROWS_PER_LEG;
    for (j, &(i, limit)) in limit_rows.iter().enumerate() {
        c.row_mut(base + j).copy_from(&b_qp.row(i));
        lower[base + j] = -limit - free[i];
        upper[base + j] = limit - free[i];
    }

    Ok(MpcProblem {
        qp: QpProblem { h, g, c, lower, upper },
        contacts: contacts.to_vec(),
        a_qp,
        b_qp,
    })
}
