use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BodyParams, RobotState};
use crate::error::{Error, Result};
use crate::locomotion::{ControllerConfig, GaitKind, GaitSchedule};
use crate::mpc::Twist;

/// Piecewise-constant command, active from `start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSegment {
    pub start: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

impl CommandSegment {
    pub fn twist(&self) -> Twist {
        Twist::new(self.vx, self.vy, self.yaw_rate)
    }
}

/// Instantaneous impulse on the body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub time: f64,
    /// World frame, N·s.
    pub impulse: [f64; 3],
    /// Application point relative to the CoM, body frame, m.
    #[serde(default)]
    pub point: [f64; 3],
}

/// Mismatch between the simulated body and the controller's model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub mass_scale: f64,
    pub inertia_scale: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            mass_scale: 1.0,
            inertia_scale: 1.0,
        }
    }
}

/// Initial body state; the position defaults to standing height over the
/// origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub position: Option<[f64; 3]>,
    /// `(roll, pitch, yaw)`
    pub rpy: [f64; 3],
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub gait: GaitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gait_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    pub duration: f64,
    pub segments: Vec<CommandSegment>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub initial: InitialState,
    /// Ground heights of successive footholds, in liftoff order.
    #[serde(default)]
    pub foothold_heights: Vec<f64>,
}

fn default_name() -> String {
    "scenario".into()
}

impl Scenario {
    /// Constant command over the whole run.
    pub fn constant(gait: GaitKind, duration: f64, cmd: Twist) -> Self {
        Self {
            name: format!("{gait}"),
            gait,
            gait_period: None,
            duty: None,
            duration,
            segments: vec![CommandSegment {
                start: 0.0,
                vx: cmd.vx,
                vy: cmd.vy,
                yaw_rate: cmd.yaw_rate,
            }],
            disturbances: Vec::new(),
            perturbation: Perturbation::default(),
            initial: InitialState::default(),
            foothold_heights: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("scenario.duration must be positive, got {}", self.duration));
        }
        if self.segments.is_empty() {
            return bad("scenario.segments must contain at least one segment".into());
        }
        if self.segments[0].start != 0.0 {
            return bad(format!("scenario.segments[0].start must be 0, got {}", self.segments[0].start));
        }
        for (i, pair) in self.segments.windows(2).enumerate() {
            if !(pair[1].start > pair[0].start) {
                return bad(format!(
                    "scenario.segments[{}].start ({}) must be greater than scenario.segments[{i}].start ({})",
                    i + 1,
                    pair[1].start,
                    pair[0].start
                ));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.start >= self.duration {
                return bad(format!("scenario.segments[{i}].start ({}) must lie before the duration", s.start));
            }
            if ![s.vx, s.vy, s.yaw_rate].iter().all(|v| v.is_finite()) {
                return bad(format!("scenario.segments[{i}] has a non-finite command"));
            }
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            if !(d.time >= 0.0 && d.time < self.duration) {
                return bad(format!("scenario.disturbances[{i}].time ({}) outside the run", d.time));
            }
            if !d.impulse.iter().chain(&d.point).all(|v| v.is_finite()) {
                return bad(format!("scenario.disturbances[{i}] has a non-finite entry"));
            }
        }
        let p = &self.perturbation;
        if !(p.mass_scale > 0.0 && p.inertia_scale > 0.0) {
            return bad("scenario.perturbation scales must be positive".into());
        }
        if self.foothold_heights.iter().any(|h| !h.is_finite()) {
            return bad("scenario.foothold_heights must be finite".into());
        }
        self.gait_schedule().validate()
    }

    pub fn gait_schedule(&self) -> GaitSchedule {
        let standard = GaitSchedule::standard(self.gait);
        GaitSchedule::new(
            self.gait,
            self.gait_period.unwrap_or(standard.period),
            self.duty.unwrap_or(standard.duty),
        )
    }

    /// Index of the segment active at `t`.
    pub fn segment_at(&self, t: f64) -> usize {
        self.segments.iter().rposition(|s| s.start <= t).unwrap_or(0)
    }

    pub fn command_at(&self, t: f64) -> Twist {
        self.segments[self.segment_at(t)].twist()
    }

    /// End time of segment `i`.
    pub fn segment_end(&self, i: usize) -> f64 {
        self.segments.get(i + 1).map_or(self.duration, |s| s.start)
    }

    pub fn initial_state(&self, stand_height: f64) -> RobotState {
        let init = &self.initial;
        let position = init.position.map_or(Vector3::new(0.0, 0.0, stand_height), Vector3::from);
        let mut state = RobotState::from_euler(Vector3::from(init.rpy), position);
        state.linear_velocity = Vector3::from(init.velocity);
        state.angular_velocity = Vector3::from(init.angular_velocity);
        state
    }
}

/// Simulation settings shared by every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub controller: ControllerConfig,
    /// The controller's body model; the simulated body applies the
    /// scenario's perturbation on top.
    pub body: BodyParams,
    /// Integration step, s.
    pub dt: f64,
    /// Trailing part of each command segment averaged for the steady-state
    /// velocity, s.
    pub steady_window: f64,
    /// Falls below this fraction of the standing height end the run.
    pub fall_height_ratio: f64,
    /// Roll or pitch beyond this angle end the run, rad.
    pub fall_tilt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            body: BodyParams::default(),
            dt: 0.001,
            steady_window: 3.0,
            fall_height_ratio: 0.4,
            fall_tilt: 0.8,
        }
    }
}

impl SimConfig {
    /// Integration steps per MPC solve.
    pub fn ticks_per_solve(&self) -> Result<usize> {
        let ratio = self.controller.mpc.dt / self.dt;
        let n = ratio.round();
        if !(n >= 1.0 && (ratio - n).abs() < 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "controller.mpc.dt ({}) must be a whole multiple of dt ({})",
                self.controller.mpc.dt, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        self.body.validate()?;
        if !(self.dt > 0.0 && self.dt <= crate::dynamics::MAX_SIM_DT) {
            return Err(Error::InvalidConfig(format!(
                "dt must lie in (0, {}], got {}",
                crate::dynamics::MAX_SIM_DT,
                self.dt
            )));
        }
        self.ticks_per_solve()?;
        if !(self.steady_window > 0.0) {
            return Err(Error::InvalidConfig("steady_window must be positive".into()));
        }
        if !(self.fall_height_ratio > 0.0 && self.fall_height_ratio < 1.0 && self.fall_tilt > 0.0) {
            return Err(Error::InvalidConfig("fall thresholds out of range".into()));
        }
        Ok(())
    }
}

/// On-disk scenario file: a `[scenario]` table and an optional `[config]`
/// table of simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    #[serde(default)]
    pub config: SimConfig,
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.config.validate()
    }
}
