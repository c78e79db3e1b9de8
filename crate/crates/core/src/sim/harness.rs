use std::fmt;

use nalgebra::Vector3;

use super::log::{MetricValue, SummaryMetrics, TickRecord, TrajectoryLog};
use super::scenario::{Scenario, SimConfig};
use crate::dynamics::{integrate_step, rot_z, ContactSet, Leg, RobotState};
use crate::error::Error;
use crate::linearization::NUM_LEGS;
use crate::locomotion::{LegMode, LocomotionController, Observation};

/// Roll or pitch above which the body counts as disturbed, rad.
pub const RECOVERY_TILT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub metrics: SummaryMetrics,
}

impl RunOutput {
    pub fn fell(&self) -> bool {
        self.metrics.flag("fall").unwrap_or(false)
    }
}

/// A rollout aborted by an error, with everything recorded before it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunOutput,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.partial.log.records.last().map_or(0.0, |r| r.t);
        write!(f, "simulation failed at t = {t:.3} s: {}", self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Initial feet: under each leg's neutral point on flat ground.
pub fn nominal_feet(state: &RobotState, config: &SimConfig) -> [Vector3<f64>; NUM_LEGS] {
    let yaw = state.yaw();
    Leg::ALL.map(|leg| {
        let h = config.body.hip_offsets[leg.index()] + Vector3::new(0.0, leg.side() * config.controller.leg.abad_offset, 0.0);
        let p = state.position + rot_z(yaw) * h;
        Vector3::new(p.x, p.y, 0.0)
    })
}

/// Deterministic closed-loop rollout of `scenario`.
///
/// Stance feet stay pinned where they touched down and transmit the held MPC
/// forces; swing feet follow their reference trajectories kinematically.
pub fn run_scenario(scenario: &Scenario, config: &SimConfig) -> Result<RunOutput, RunFailure> {
    let fail_early = |error| RunFailure {
        error,
        partial: RunOutput {
            log: TrajectoryLog {
                dt: config.dt,
                records: Vec::new(),
            },
            metrics: SummaryMetrics::default(),
        },
    };
    scenario.validate().map_err(fail_early)?;
    config.validate().map_err(fail_early)?;
    let per_solve = config.ticks_per_solve().map_err(fail_early)?;

    let truth = config
        .body
        .scaled(scenario.perturbation.mass_scale, scenario.perturbation.inertia_scale);
    let mut ctl = LocomotionController::new(config.controller.clone(), config.body.clone(), scenario.gait_schedule())
        .map_err(fail_early)?
        .with_foothold_heights(scenario.foothold_heights.clone());

    let dt = config.dt;
    let ticks = (scenario.duration / dt).round() as usize;
    let mut state = scenario.initial_state(config.controller.stand_height);
    let mut feet = nominal_feet(&state, config);
    let mut foot_vel = [Vector3::zeros(); NUM_LEGS];
    let mut was_stance = [true; NUM_LEGS];
    let disturbance_ticks: Vec<usize> = scenario.disturbances.iter().map(|d| (d.time / dt).round() as usize).collect();

    let mut sim = Tracker::new(scenario, config, truth.weight());
    let mut log = TrajectoryLog {
        dt,
        records: Vec::with_capacity(ticks),
    };
    let mut failure = None;

    for tick in 0..ticks {
        let t = tick as f64 * dt;
        for (d, _) in scenario.disturbances.iter().zip(&disturbance_ticks).filter(|(_, &k)| k == tick) {
            let j = Vector3::from(d.impulse);
            let arm = state.rotation * Vector3::from(d.point);
            state.linear_velocity += j / truth.mass;
            let inertia_inv = state.world_inertia(&truth).try_inverse().expect("validated inertia");
            state.angular_velocity += inertia_inv * arm.cross(&j);
        }

        let cmd = scenario.command_at(t);
        let obs = Observation {
            t,
            state,
            feet,
            foot_velocities: foot_vel,
        };
        let solve = tick % per_solve == 0;
        let out = if solve {
            ctl.control_tick(&obs, &cmd)
        } else {
            ctl.leg_tick(&obs, &cmd)
        };
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };

        let mut stance = [false; NUM_LEGS];
        let mut forces = [Vector3::zeros(); NUM_LEGS];
        for (i, c) in out.commands.iter().enumerate() {
            match c.mode {
                LegMode::Stance => {
                    if !was_stance[i] {
                        if let Some(h) = sim.touchdown_height[i] {
                            feet[i].z = h;
                        }
                    }
                    foot_vel[i] = Vector3::zeros();
                    stance[i] = true;
                    forces[i] = c.force;
                }
                LegMode::Swing => {
                    let (p, v) = c.foot_target.expect("swing commands carry a target");
                    feet[i] = p;
                    foot_vel[i] = v;
                    sim.touchdown_height[i] = c.foothold.map(|f| f.z);
                }
            }
            was_stance[i] = stance[i];
        }

        let record = TickRecord {
            t,
            state,
            feet,
            forces,
            torques: out.commands.map(|c| c.torques),
            qp_status: out.diagnostics.qp_status,
            qp_iterations: out.diagnostics.qp_iterations,
            fallback: out.diagnostics.fallback,
            modes: out.commands.map(|c| c.mode),
        };
        sim.observe(&record, solve, out.commands.iter().map(|c| c.torques.dot(&c.qd)).sum::<f64>() * dt);
        log.records.push(record);

        let contacts = ContactSet::new(feet, stance, forces);
        state = match integrate_step(&state, &truth, &contacts, dt) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        if sim.check_fall(&state, &feet, t + dt) {
            log::info!("{}: fall at t = {:.3} s", scenario.name, t + dt);
            break;
        }
    }

    let metrics = sim.finish(&log, &state);
    let output = RunOutput { log, metrics };
    match failure {
        Some(error) => Err(RunFailure { error, partial: output }),
        None => Ok(output),
    }
}

// Running metric accumulators.
struct Tracker<'a> {
    scenario: &'a Scenario,
    config: &'a SimConfig,
    weight: f64,
    touchdown_height: [Option<f64>; NUM_LEGS],
    fall_time: Option<f64>,
    max_roll: f64,
    max_pitch: f64,
    min_height: f64,
    energy: f64,
    solves: usize,
    iterations: usize,
    fallbacks: usize,
    max_support_error: f64,
    last_forces: [Vector3<f64>; NUM_LEGS],
}

impl<'a> Tracker<'a> {
    fn new(scenario: &'a Scenario, config: &'a SimConfig, weight: f64) -> Self {
        Self {
            scenario,
            config,
            weight,
            touchdown_height: [None; NUM_LEGS],
            fall_time: None,
            max_roll: 0.0,
            max_pitch: 0.0,
            min_height: f64::INFINITY,
            energy: 0.0,
            solves: 0,
            iterations: 0,
            fallbacks: 0,
            max_support_error: 0.0,
            last_forces: [Vector3::zeros(); NUM_LEGS],
        }
    }

    fn observe(&mut self, r: &TickRecord, solved: bool, work: f64) {
        let rpy = r.state.euler();
        self.max_roll = self.max_roll.max(rpy.x.abs());
        self.max_pitch = self.max_pitch.max(rpy.y.abs());
        self.min_height = self.min_height.min(r.state.position.z);
        self.energy += work;
        if solved {
            self.solves += 1;
            self.iterations += r.qp_iterations;
            self.fallbacks += usize::from(r.fallback);
            let fz: f64 = r.forces.iter().map(|f| f.z).sum();
            self.max_support_error = self.max_support_error.max((fz - self.weight).abs() / self.weight);
            self.last_forces = r.forces;
        }
    }

    fn check_fall(&mut self, state: &RobotState, feet: &[Vector3<f64>; NUM_LEGS], t: f64) -> bool {
        let ground = feet.iter().map(|f| f.z).sum::<f64>() / NUM_LEGS as f64;
        let rpy = state.euler();
        let cfg = self.config;
        let fell = !state.is_finite()
            || state.position.z - ground < cfg.fall_height_ratio * cfg.controller.stand_height
            || rpy.x.abs() > cfg.fall_tilt
            || rpy.y.abs() > cfg.fall_tilt;
        if fell {
            self.fall_time = Some(t);
        }
        fell
    }

    fn finish(self, log: &TrajectoryLog, last: &RobotState) -> SummaryMetrics {
        use MetricValue::{Bool, Float, Int};
        let mut m = SummaryMetrics::default();
        let sc = self.scenario;
        m.set("scenario", MetricValue::Text(sc.name.clone()));
        m.set("gait", MetricValue::Text(sc.gait.to_string()));
        m.set("fall", Bool(self.fall_time.is_some()));
        if let Some(t) = self.fall_time {
            m.set("fall_time", Float(t));
        }
        m.set("ticks", Int(log.records.len() as u64));
        m.set("max_abs_roll", Float(self.max_roll));
        m.set("max_abs_pitch", Float(self.max_pitch));
        m.set("min_height", Float(if self.min_height.is_finite() { self.min_height } else { 0.0 }));
        m.set("energy_proxy", Float(self.energy));
        m.set("qp_solves", Int(self.solves as u64));
        m.set("qp_fallbacks", Int(self.fallbacks as u64));
        let mean_iters = if self.solves > 0 { self.iterations as f64 / self.solves as f64 } else { 0.0 };
        m.set("mean_qp_iterations", Float(mean_iters));
        m.set("max_support_error_ratio", Float(self.max_support_error));
        let f = &self.last_forces;
        let asym = (f[0] - f[3]).norm().max((f[1] - f[2]).norm());
        m.set("final_diagonal_force_asymmetry", Float(asym));
        m.set("final_speed", Float(last.linear_velocity.norm()));

        for (i, seg) in sc.segments.iter().enumerate() {
            let (start, end) = (seg.start, sc.segment_end(i));
            let window_start = end - self.config.steady_window.min((end - start) / 2.0);
            let (mut sq, mut n) = (0.0, 0usize);
            let (mut sum_vx, mut sum_vy, mut n_ss) = (0.0, 0.0, 0usize);
            for r in log.records.iter().filter(|r| r.t >= start && r.t < end) {
                let v = rot_z(r.state.yaw()).transpose() * r.state.linear_velocity;
                let (ex, ey) = (v.x - seg.vx, v.y - seg.vy);
                sq += ex * ex + ey * ey;
                n += 1;
                if r.t >= window_start {
                    sum_vx += v.x;
                    sum_vy += v.y;
                    n_ss += 1;
                }
            }
            let mean = |s: f64, k: usize| if k > 0 { s / k as f64 } else { f64::NAN };
            m.set(format!("segment_{i}_velocity_rms_error"), Float(mean(sq, n).sqrt()));
            m.set(format!("segment_{i}_steady_vx"), Float(mean(sum_vx, n_ss)));
            m.set(format!("segment_{i}_steady_vy"), Float(mean(sum_vy, n_ss)));
        }

        for (i, d) in sc.disturbances.iter().enumerate() {
            let last_tilted = log
                .records
                .iter()
                .filter(|r| r.t >= d.time)
                .filter(|r| {
                    let rpy = r.state.euler();
                    rpy.x.abs() >= RECOVERY_TILT || rpy.y.abs() >= RECOVERY_TILT
                })
                .map(|r| r.t + log.dt)
                .last();
            let recovery = last_tilted.map_or(0.0, |t| t - d.time);
            m.set(format!("disturbance_{i}_recovery_time"), Float(recovery));
        }
        m
    }
}
