use quadmpc::hopper::{HopperParams, HopperState, MAX_HOPPER_DT};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Hopper run file: `[params]` for the model and controller, `[run]` for
/// the rollout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopperFile {
    pub params: HopperParams,
    pub run: HopperRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopperRun {
    pub duration: f64,
    pub dt: f64,
    /// Forward speed reference, m/s.
    pub speed_ref: f64,
    /// Drop height of the body, m.
    pub initial_height: f64,
    pub initial_speed: f64,
}

impl Default for HopperRun {
    fn default() -> Self {
        Self {
            duration: 10.0,
            dt: 5e-4,
            speed_ref: 1.0,
            initial_height: 0.6,
            initial_speed: 0.0,
        }
    }
}

impl HopperFile {
    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let r = &self.run;
        let bad = |m: String| Err(CliError::Config(m));
        if !(r.duration > 0.0 && r.duration.is_finite()) {
            return bad(format!("run.duration must be positive, got {}", r.duration));
        }
        if !(r.dt > 0.0 && r.dt <= MAX_HOPPER_DT) {
            return bad(format!("run.dt must lie in (0, {MAX_HOPPER_DT}], got {}", r.dt));
        }
        if !(r.initial_height > self.params.rest_length) {
            return bad(format!(
                "run.initial_height ({}) must clear the leg rest length ({})",
                r.initial_height, self.params.rest_length
            ));
        }
        if !(r.speed_ref.is_finite() && r.initial_speed.is_finite()) {
            return bad("run speeds must be finite".into());
        }
        Ok(())
    }

    pub fn initial_state(&self) -> HopperState {
        let mut s = HopperState::at_rest(&self.params, self.run.initial_height);
        s.xd = self.run.initial_speed;
        s
    }
}
