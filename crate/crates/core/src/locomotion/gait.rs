use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Leg;
use crate::error::Error;

// Phases this close to a cycle boundary snap onto it so that schedule
// transitions land exactly on MPC ticks despite rounding in t / T.
const PHASE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitKind {
    Stand,
    Trot,
    Pace,
    Bound,
    Pronk,
}

impl GaitKind {
    pub const ALL: [GaitKind; 5] = [
        GaitKind::Stand,
        GaitKind::Trot,
        GaitKind::Pace,
        GaitKind::Bound,
        GaitKind::Pronk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GaitKind::Stand => "stand",
            GaitKind::Trot => "trot",
            GaitKind::Pace => "pace",
            GaitKind::Bound => "bound",
            GaitKind::Pronk => "pronk",
        }
    }
}

impl fmt::Display for GaitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GaitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GaitKind::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown gait `{s}`")))
    }
}

/// Periodic contact pattern.
///
/// Leg `i` is in stance at time `t` iff `frac(t / period − offsetᵢ) < duty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSchedule {
    pub kind: GaitKind,
    pub period: f64,
    /// Phase offsets in [`Leg`] order, each in `[0, 1)`.
    pub offsets: [f64; 4],
    pub duty: f64,
}

/// Legs that touch down together and share load equally.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLegGroup {
    pub members: Vec<Leg>,
    pub phase: f64,
    pub equal_force: bool,
}

impl GaitSchedule {
    pub const DEFAULT_PERIOD: f64 = 0.3;

    pub fn new(kind: GaitKind, period: f64, duty: f64) -> Self {
        let offsets = match kind {
            GaitKind::Stand | GaitKind::Pronk => [0.0; 4],
            // diagonal pairs
            GaitKind::Trot => [0.0, 0.5, 0.5, 0.0],
            // lateral pairs
            GaitKind::Pace => [0.0, 0.5, 0.0, 0.5],
            // front and rear pairs
            GaitKind::Bound => [0.0, 0.0, 0.5, 0.5],
        };
        let duty = if kind == GaitKind::Stand { 1.0 } else { duty };
        Self {
            kind,
            period,
            offsets,
            duty,
        }
    }

    /// Built-in gait with the default period and a 0.5 duty factor.
    pub fn standard(kind: GaitKind) -> Self {
        Self::new(kind, Self::DEFAULT_PERIOD, 0.5)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::InvalidConfig("gait period must be positive".into()));
        }
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return Err(Error::InvalidConfig("gait duty must lie in (0, 1]".into()));
        }
        if self.offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            return Err(Error::InvalidConfig("gait offsets must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn stance_duration(&self) -> f64 {
        self.duty * self.period
    }

    pub fn swing_duration(&self) -> f64 {
        (1.0 - self.duty) * self.period
    }

    /// Position of `leg` within its own cycle, in `[0, 1)`; stance occupies
    /// `[0, duty)`.
    pub fn phase(&self, leg: Leg, t: f64) -> f64 {
        let phase = (t / self.period - self.offsets[leg.index()]).rem_euclid(1.0);
        if phase > 1.0 - PHASE_SNAP {
            0.0
        } else {
            phase
        }
    }

    pub fn in_stance(&self, leg: Leg, t: f64) -> bool {
        self.duty >= 1.0 || self.phase(leg, t) < self.duty
    }

    /// Progress through the current swing in `[0, 1)`, or `None` in stance.
    pub fn swing_progress(&self, leg: Leg, t: f64) -> Option<f64> {
        if self.in_stance(leg, t) {
            None
        } else {
            Some((self.phase(leg, t) - self.duty) / (1.0 - self.duty))
        }
    }

    /// Time left until `leg` next touches down (zero in stance).
    pub fn time_to_touchdown(&self, leg: Leg, t: f64) -> f64 {
        match self.swing_progress(leg, t) {
            Some(s) => (1.0 - s) * self.swing_duration(),
            None => 0.0,
        }
    }

    pub fn contacts_at(&self, t: f64) -> [bool; 4] {
        Leg::ALL.map(|leg| self.in_stance(leg, t))
    }

    /// Legs grouped by shared phase offset.
    pub fn virtual_legs(&self) -> Vec<VirtualLegGroup> {
        let mut groups: Vec<VirtualLegGroup> = Vec::new();
        for leg in Leg::ALL {
            let phase = self.offsets[leg.index()];
            match groups.iter_mut().find(|g| g.phase == phase) {
                Some(g) => g.members.push(leg),
                None => groups.push(VirtualLegGroup {
                    members: vec![leg],
                    phase,
                    equal_force: true,
                }),
            }
        }
        groups
    }
}

/// Contact table for steps `k = 0..horizon` at times `t + k·dt`.
pub fn schedule_contacts(gait: &GaitSchedule, t: f64, horizon: usize, dt: f64) -> Vec<[bool; 4]> {
    (0..horizon)
        .map(|k| gait.contacts_at(t + k as f64 * dt))
        .collect()
}
