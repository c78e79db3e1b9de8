//! Per-tick quadruped controller and its building blocks.

mod controller;
mod gait;
mod kinematics;
mod swing;

pub use controller::{
    ControllerConfig, Diagnostics, LegCommand, LegMode, LocomotionController, Observation, TickOutput,
};
pub use gait::{schedule_contacts, GaitKind, GaitSchedule, VirtualLegGroup};
pub use kinematics::{impedance_torques, stance_torques, LegGeometry, LegKinematics};
pub use swing::{raibert_foot_placement, swing_trajectory, SwingSample};
