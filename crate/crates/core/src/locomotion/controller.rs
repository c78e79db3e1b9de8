use nalgebra::{DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::gait::{schedule_contacts, GaitSchedule};
use super::kinematics::{impedance_torques, stance_torques, LegGeometry, LegKinematics};
use super::swing::{raibert_foot_placement, swing_trajectory};
use crate::dynamics::{rot_z, BodyParams, ContactSet, Leg, RobotState};
use crate::error::{Error, Result};
use crate::linearization::{build_continuous, discretize, state_vector, INPUT_DIM, NUM_LEGS};
use crate::mpc::{build_mpc, MpcConfig, MpcProblem, ReferenceTrajectory, Twist};
use crate::qp::{QpSettings, QpSolution, QpSolver, QpStatus, WarmStart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub mpc: MpcConfig,
    pub qp: QpSettings,
    pub leg: LegGeometry,
    /// Body height above the ground under the stance feet, m.
    pub stand_height: f64,
    /// Swing apex above the foothold, m.
    pub swing_height: f64,
    /// `k_ẋ` of the foot placement law, s.
    pub raibert_gain: f64,
    pub swing_kp: [f64; 3],
    pub swing_kd: [f64; 3],
    /// Scale applied to the held forces when a solve fails.
    pub fallback_decay: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            qp: QpSettings {
                tol: 1e-5,
                max_iters: 4000,
                ..QpSettings::default()
            },
            leg: LegGeometry::default(),
            stand_height: 0.3,
            swing_height: 0.08,
            raibert_gain: 0.03,
            swing_kp: [700.0; 3],
            swing_kd: [20.0; 3],
            fallback_decay: 0.9,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.stand_height > 0.0) {
            return bad("stand height must be positive");
        }
        if !(self.swing_height >= 0.0) {
            return bad("swing height must be non-negative");
        }
        if !(self.raibert_gain >= 0.0) {
            return bad("raibert gain must be non-negative");
        }
        if !(self.fallback_decay >= 0.0 && self.fallback_decay <= 1.0) {
            return bad("fallback decay must lie in [0, 1]");
        }
        if !(self.qp.tol > 0.0 && self.qp.max_iters > 0) {
            return bad("qp tolerance and iteration limit must be positive");
        }
        let g = &self.leg;
        if !(g.abad_offset >= 0.0 && g.upper > 0.0 && g.lower > 0.0 && g.knee_min < g.knee_max) {
            return bad("invalid leg geometry");
        }
        Ok(())
    }
}

/// What the controller sees each tick: ground-truth body state and the
/// world-frame positions and velocities of the four feet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub state: RobotState,
    pub feet: [Vector3<f64>; NUM_LEGS],
    pub foot_velocities: [Vector3<f64>; NUM_LEGS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegMode {
    Swing,
    Stance,
}

impl LegMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LegMode::Swing => "swing",
            LegMode::Stance => "stance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegCommand {
    pub mode: LegMode,
    pub torques: Vector3<f64>,
    /// Ground-reaction force on the body, world frame; zero in swing.
    pub force: Vector3<f64>,
    /// Swing reference in the world frame: position and velocity.
    pub foot_target: Option<(Vector3<f64>, Vector3<f64>)>,
    /// Planned touchdown point of a swing leg.
    pub foothold: Option<Vector3<f64>>,
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub forces: [Vector3<f64>; NUM_LEGS],
    /// Status of the solve run this tick, if any.
    pub qp_status: Option<QpStatus>,
    pub qp_iterations: usize,
    /// Set when a failed solve was replaced by decayed previous forces.
    pub fallback: bool,
    pub swing_phases: [Option<f64>; NUM_LEGS],
    /// Legs whose torque map hit a kinematic singularity (torques zeroed).
    pub singular: [bool; NUM_LEGS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub commands: [LegCommand; NUM_LEGS],
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
struct SwingPlan {
    start: Vector3<f64>,
    foothold: Vector3<f64>,
}

/// Stateful quadruped controller.
///
/// [`control_tick`](Self::control_tick) re-solves the ground-force MPC;
/// [`leg_tick`](Self::leg_tick) runs the fast leg loop on the held forces.
#[derive(Debug)]
pub struct LocomotionController {
    config: ControllerConfig,
    params: BodyParams,
    gait: GaitSchedule,
    solver: QpSolver,
    held: [Vector3<f64>; NUM_LEGS],
    last: Option<QpSolution>,
    last_rows_per_step: usize,
    swing: [Option<SwingPlan>; NUM_LEGS],
    foothold_heights: Vec<f64>,
    footsteps: usize,
}

impl LocomotionController {
    /// `params` is the controller's model of the body, which may differ from
    /// the simulated one.
    pub fn new(config: ControllerConfig, params: BodyParams, gait: GaitSchedule) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        gait.validate()?;
        let solver = QpSolver::new(config.qp);
        Ok(Self {
            config,
            params,
            gait,
            solver,
            held: [Vector3::zeros(); NUM_LEGS],
            last: None,
            last_rows_per_step: 0,
            swing: [None; NUM_LEGS],
            foothold_heights: Vec::new(),
            footsteps: 0,
        })
    }

    /// Ground heights of successive footholds, consumed one per liftoff in
    /// order; ground is at 0 once the table runs out.
    pub fn with_foothold_heights(mut self, heights: Vec<f64>) -> Self {
        self.foothold_heights = heights;
        self
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn params(&self) -> &BodyParams {
        &self.params
    }

    pub fn gait(&self) -> &GaitSchedule {
        &self.gait
    }

    /// Switches gait; swing plans in progress are kept.
    pub fn set_gait(&mut self, gait: GaitSchedule) -> Result<()> {
        gait.validate()?;
        self.gait = gait;
        Ok(())
    }

    pub fn held_forces(&self) -> &[Vector3<f64>; NUM_LEGS] {
        &self.held
    }

    /// Solves the MPC at the observation and emits leg commands.
    pub fn control_tick(&mut self, obs: &Observation, cmd: &Twist) -> Result<TickOutput> {
        let contacts_now = self.gait.contacts_at(obs.t);
        self.update_swing_plans(obs, cmd, &contacts_now);
        let (status, iterations, fallback) = match self.solve(obs, cmd) {
            Ok((problem, sol)) => {
                let ok = sol.status == QpStatus::Solved;
                let (status, iters) = (sol.status, sol.iterations);
                if ok {
                    self.held = problem.forces_at(&sol.u, 0);
                    self.last_rows_per_step = problem.qp.num_constraints() / problem.horizon();
                    self.last = Some(sol);
                } else {
                    self.decay();
                }
                (Some(status), iters, !ok)
            }
            Err(e) => {
                log::warn!("mpc solve failed at t = {:.3} s: {e}", obs.t);
                self.decay();
                (None, 0, true)
            }
        };
        if fallback {
            log::warn!("mpc fallback at t = {:.3} s ({status:?})", obs.t);
        }
        let mut out = self.leg_commands(obs, cmd, &contacts_now);
        out.diagnostics.qp_status = status;
        out.diagnostics.qp_iterations = iterations;
        out.diagnostics.fallback = fallback;
        Ok(out)
    }

    /// Leg loop between solves: swing tracking and stance torques from the
    /// held forces.
    pub fn leg_tick(&mut self, obs: &Observation, cmd: &Twist) -> Result<TickOutput> {
        let contacts_now = self.gait.contacts_at(obs.t);
        self.update_swing_plans(obs, cmd, &contacts_now);
        Ok(self.leg_commands(obs, cmd, &contacts_now))
    }

    fn decay(&mut self) {
        let k = self.config.fallback_decay;
        for f in &mut self.held {
            *f *= k;
        }
        self.last = None;
    }

    fn solve(&mut self, obs: &Observation, cmd: &Twist) -> Result<(MpcProblem, QpSolution)> {
        let cfg = &self.config;
        let (n, dt) = (cfg.mpc.horizon, cfg.mpc.dt);
        let contacts = schedule_contacts(&self.gait, obs.t, n, dt);
        let state = &obs.state;
        let yaw = state.yaw();

        // stance feet where they are, swing feet at their planned footholds
        let feet: [Vector3<f64>; NUM_LEGS] = std::array::from_fn(|i| match &self.swing[i] {
            Some(plan) => plan.foothold,
            None => obs.feet[i],
        });
        let model = build_continuous(&self.params, yaw, &state.position, &ContactSet::new(feet, [true; 4], [Vector3::zeros(); 4]))?;
        let model = discretize(model, dt)?;

        let ground = self.support_height(obs);
        let reference = ReferenceTrajectory::constant_twist(state, cmd, ground + cfg.stand_height, n, dt);
        let x0 = state_vector(state);
        let problem = build_mpc(&model, &contacts, &reference, &cfg.mpc, &x0)?;

        let warm = self.shifted_warm_start(&problem);
        let sol = self.solver.solve(&problem.qp, warm.as_ref())?;
        Ok((problem, sol))
    }

    // previous solution advanced by one step, last step repeated
    fn shifted_warm_start(&self, problem: &MpcProblem) -> Option<WarmStart> {
        let last = self.last.as_ref()?;
        let nu = problem.qp.num_vars();
        let nc = problem.qp.num_constraints();
        let rows = nc / problem.horizon();
        if last.u.len() != nu || last.z.len() != nc || rows != self.last_rows_per_step {
            return None;
        }
        Some(WarmStart {
            u: shift(&last.u, INPUT_DIM),
            z: Some(shift(&last.z, rows)),
            multipliers: Some(shift(&last.multipliers, rows)),
        })
    }

    fn support_height(&self, obs: &Observation) -> f64 {
        let stance: Vec<f64> = (0..NUM_LEGS)
            .filter(|&i| self.swing[i].is_none())
            .map(|i| obs.feet[i].z)
            .collect();
        if stance.is_empty() {
            obs.feet.iter().map(|f| f.z).sum::<f64>() / NUM_LEGS as f64
        } else {
            stance.iter().sum::<f64>() / stance.len() as f64
        }
    }

    fn update_swing_plans(&mut self, obs: &Observation, cmd: &Twist, contacts_now: &[bool; NUM_LEGS]) {
        for leg in Leg::ALL {
            let i = leg.index();
            if contacts_now[i] {
                self.swing[i] = None;
                continue;
            }
            let start = match &self.swing[i] {
                Some(plan) => plan.start,
                None => obs.feet[i],
            };
            let height = match self.swing[i] {
                Some(plan) => plan.foothold.z,
                None => {
                    let h = self.foothold_heights.get(self.footsteps).copied().unwrap_or(0.0);
                    self.footsteps += 1;
                    h
                }
            };
            let foothold = self.foothold(obs, cmd, leg, height);
            self.swing[i] = Some(SwingPlan { start, foothold });
        }
    }

    fn foothold(&self, obs: &Observation, cmd: &Twist, leg: Leg, ground: f64) -> Vector3<f64> {
        let gait = &self.gait;
        let state = &obs.state;
        let yaw = state.yaw();
        let v_ref = rot_z(yaw) * Vector3::new(cmd.vx, cmd.vy, 0.0);
        let neutral_body = self.params.hip_offsets[leg.index()] + Vector3::new(0.0, leg.side() * self.config.leg.abad_offset, 0.0);
        let remaining = gait.time_to_touchdown(leg, obs.t);
        let hip = state.position + rot_z(yaw) * neutral_body + v_ref * remaining;
        let vel = Vector2::new(state.linear_velocity.x, state.linear_velocity.y);
        raibert_foot_placement(
            &vel,
            &v_ref.xy(),
            gait.stance_duration(),
            self.config.raibert_gain,
            &Vector3::new(hip.x, hip.y, ground),
        )
    }

    fn leg_commands(&self, obs: &Observation, _cmd: &Twist, contacts_now: &[bool; NUM_LEGS]) -> TickOutput {
        let state = &obs.state;
        let r = state.rotation;
        let kp = Matrix3::from_diagonal(&Vector3::from(self.config.swing_kp));
        let kd = Matrix3::from_diagonal(&Vector3::from(self.config.swing_kd));
        let mut singular = [false; NUM_LEGS];
        let mut swing_phases = [None; NUM_LEGS];
        let mut forces = [Vector3::zeros(); NUM_LEGS];

        let commands = std::array::from_fn(|i| {
            let leg = Leg::ALL[i];
            let hip = self.params.hip_offsets[i];
            let rel = |p: &Vector3<f64>, v: &Vector3<f64>| {
                let arm = p - state.position;
                let pos = r.transpose() * arm - hip;
                let vel = r.transpose() * (v - state.linear_velocity - state.angular_velocity.cross(&arm));
                (pos, vel)
            };
            let (foot, foot_vel) = rel(&obs.feet[i], &obs.foot_velocities[i]);
            let (q, _) = LegKinematics::inverse(self.config.leg, leg.side(), &foot);
            let mut kin = LegKinematics::new(self.config.leg, leg.side(), q, Vector3::zeros());
            kin.qd = kin.joint_velocity_for(&foot_vel).unwrap_or_default();

            if contacts_now[i] {
                let force = self.held[i];
                forces[i] = force;
                let torques = stance_torques(&kin, &r, &force).unwrap_or_else(|_| {
                    singular[i] = true;
                    Vector3::zeros()
                });
                LegCommand {
                    mode: LegMode::Stance,
                    torques,
                    force,
                    foot_target: None,
                    foothold: None,
                    q: kin.q,
                    qd: kin.qd,
                }
            } else {
                let s = self.gait.swing_progress(leg, obs.t).unwrap_or(0.0);
                swing_phases[i] = Some(s);
                let plan = self.swing[i].expect("swing plan exists for every swing leg");
                let sample = swing_trajectory(&plan.start, &plan.foothold, self.config.swing_height, s)
                    .expect("swing progress lies in [0, 1)")
                    .time_scaled(self.gait.swing_duration());
                let (p_des, v_des) = rel(&sample.position, &sample.velocity);
                let torques = impedance_torques(&kin, &p_des, &v_des, &kp, &kd).unwrap_or_else(|_| {
                    singular[i] = true;
                    Vector3::zeros()
                });
                LegCommand {
                    mode: LegMode::Swing,
                    torques,
                    force: Vector3::zeros(),
                    foot_target: Some((sample.position, sample.velocity)),
                    foothold: Some(plan.foothold),
                    q: kin.q,
                    qd: kin.qd,
                }
            }
        });

        TickOutput {
            commands,
            diagnostics: Diagnostics {
                forces,
                qp_status: None,
                qp_iterations: 0,
                fallback: false,
                swing_phases,
                singular,
            },
        }
    }
}

fn shift(v: &DVector<f64>, block: usize) -> DVector<f64> {
    let n = v.len();
    let mut out = DVector::zeros(n);
    if n >= block {
        out.rows_mut(0, n - block).copy_from(&v.rows(block, n - block));
        out.rows_mut(n - block, block).copy_from(&v.rows(n - block, block));
    }
    out
}
