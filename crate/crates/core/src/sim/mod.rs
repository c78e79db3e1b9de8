//! Closed-loop quadruped simulation.

mod harness;
mod log;
mod scenario;

pub use harness::{nominal_feet, run_scenario, RunFailure, RunOutput, RECOVERY_TILT};
pub use log::{format_sig9, MetricValue, SummaryMetrics, TickRecord, TrajectoryLog};
pub use scenario::{CommandSegment, Disturbance, InitialState, Perturbation, Scenario, ScenarioFile, SimConfig};
