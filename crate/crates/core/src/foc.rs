//! Field-oriented current control of a three-phase motor.
//!
//! The DQ0 transform is amplitude invariant: a balanced set of phase
//! currents of amplitude `A` maps to a `(d, q)` vector of length `A`. The
//! price is a power factor of 3/2,
//! `p = 3/2 (v_d i_d + v_q i_q) + 3 v_0 i_0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const THIRD: f64 = 2.0 * PI / 3.0;

/// Stator-frame phase quantities (currents in A, or voltages in V).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseCurrents {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Rotor-frame quantities at electrical angle `theta` (rad).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DqCurrents {
    pub d: f64,
    pub q: f64,
    pub zero: f64,
    pub theta: f64,
}

impl PhaseCurrents {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Balanced sinusoid `A cos(θ + φ)` and its two lagging phases.
    pub fn balanced(amplitude: f64, theta: f64, phase: f64) -> Self {
        let w = theta + phase;
        Self::new(
            amplitude * w.cos(),
            amplitude * (w - THIRD).cos(),
            amplitude * (w + THIRD).cos(),
        )
    }

    /// Instantaneous power `Σ v_k i_k`.
    pub fn power(&self, current: &PhaseCurrents) -> f64 {
        self.a * current.a + self.b * current.b + self.c * current.c
    }
}

impl DqCurrents {
    pub fn new(d: f64, q: f64, zero: f64, theta: f64) -> Self {
        Self { d, q, zero, theta }
    }

    /// Instantaneous power in the rotor frame, `self` being the voltage.
    pub fn power(&self, current: &DqCurrents) -> f64 {
        1.5 * (self.d * current.d + self.q * current.q) + 3.0 * self.zero * current.zero
    }
}

pub fn dq0_transform(abc: &PhaseCurrents, theta: f64) -> DqCurrents {
    let (ca, cb, cc) = (theta.cos(), (theta - THIRD).cos(), (theta + THIRD).cos());
    let (sa, sb, sc) = (theta.sin(), (theta - THIRD).sin(), (theta + THIRD).sin());
    DqCurrents {
        d: 2.0 / 3.0 * (abc.a * ca + abc.b * cb + abc.c * cc),
        q: -2.0 / 3.0 * (abc.a * sa + abc.b * sb + abc.c * sc),
        zero: (abc.a + abc.b + abc.c) / 3.0,
        theta,
    }
}

pub fn inverse_dq0(dq: &DqCurrents, theta: f64) -> PhaseCurrents {
    let phase = |shift: f64| dq.d * (theta + shift).cos() - dq.q * (theta + shift).sin() + dq.zero;
    PhaseCurrents {
        a: phase(0.0),
        b: phase(-THIRD),
        c: phase(THIRD),
    }
}

/// Gains of the d and q current PIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
    /// Per-axis voltage clamp, V.
    pub voltage_limit: f64,
}

impl PiGains {
    /// Pole-zero cancellation for an `R`, `L` axis: `K_p = L ω_c`,
    /// `K_i = R ω_c`. The loop then follows a first-order lag with time
    /// constant `1/ω_c`, reaching 90% of a step after `ln(10)/ω_c`.
    pub fn from_bandwidth(resistance: f64, inductance: f64, bandwidth: f64, voltage_limit: f64) -> Result<Self> {
        if !(resistance > 0.0 && inductance > 0.0 && bandwidth > 0.0 && voltage_limit > 0.0) {
            return Err(Error::InvalidConfig(
                "motor resistance, inductance, bandwidth and voltage limit must be positive".into(),
            ));
        }
        Ok(Self {
            kp: inductance * bandwidth,
            ki: resistance * bandwidth,
            voltage_limit,
        })
    }
}

/// Integrator state of both axes, in V.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PiState {
    pub integral_d: f64,
    pub integral_q: f64,
}

fn pi_axis(error: f64, integral: f64, gains: &PiGains, dt: f64) -> (f64, f64) {
    let lim = gains.voltage_limit;
    let integral = (integral + gains.ki * error * dt).clamp(-lim, lim);
    ((gains.kp * error + integral).clamp(-lim, lim), integral)
}

/// One discrete PI update per axis. Returns the rotor-frame voltage command
/// (zero-sequence voltage is zero) and the new integrator state.
pub fn pi_current_step(
    reference: &DqCurrents,
    measured: &DqCurrents,
    gains: &PiGains,
    state: &PiState,
    dt: f64,
) -> (DqCurrents, PiState) {
    let (vd, id) = pi_axis(reference.d - measured.d, state.integral_d, gains, dt);
    let (vq, iq) = pi_axis(reference.q - measured.q, state.integral_q, gains, dt);
    (
        DqCurrents::new(vd, vq, 0.0, measured.theta),
        PiState {
            integral_d: id,
            integral_q: iq,
        },
    )
}

/// Current loop with a fixed sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentController {
    gains: PiGains,
    dt: f64,
    state: PiState,
}

impl CurrentController {
    pub fn new(gains: PiGains, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("current loop dt must be positive, got {dt}")));
        }
        Ok(Self {
            gains,
            dt,
            state: PiState::default(),
        })
    }

    pub fn state(&self) -> &PiState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&mut self, reference: &DqCurrents, measured: &DqCurrents) -> DqCurrents {
        let (v, s) = pi_current_step(reference, measured, &self.gains, &self.state, self.dt);
        self.state = s;
        v
    }

    /// Stator voltages for the rotor-frame command at the measured angle.
    pub fn step_abc(&mut self, reference: &DqCurrents, phase: &PhaseCurrents, theta: f64) -> PhaseCurrents {
        let v = self.step(reference, &dq0_transform(phase, theta));
        inverse_dq0(&v, theta)
    }
}

/// One rotor-frame axis of the motor, `L di/dt = v − R i`, no back-EMF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlAxis {
    pub resistance: f64,
    pub inductance: f64,
}

impl RlAxis {
    /// Exact response to a voltage held for `dt`.
    pub fn step(&self, current: f64, voltage: f64, dt: f64) -> f64 {
        let decay = (-self.resistance / self.inductance * dt).exp();
        current * decay + (1.0 - decay) * voltage / self.resistance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_maps_to_zero() {
        let dq = dq0_transform(&PhaseCurrents::default(), 1.3);
        assert_eq!((dq.d, dq.q, dq.zero), (0.0, 0.0, 0.0));
        assert_eq!(inverse_dq0(&DqCurrents::default(), 0.7), PhaseCurrents::default());
    }

    #[test]
    fn d_axis_aligns_with_phase_a() {
        let abc = inverse_dq0(&DqCurrents::new(1.0, 0.0, 0.0, 0.0), 0.0);
        assert!((abc.a - 1.0).abs() < 1e-15);
        assert!((abc.b + 0.5).abs() < 1e-15);
        assert!((abc.c + 0.5).abs() < 1e-15);
    }

    #[test]
    fn balanced_currents_give_constant_dq() {
        let (amp, phi) = (3.2, 0.4);
        let mut first = None;
        for k in 0..=720 {
            let theta = 2.0 * PI * k as f64 / 720.0;
            let abc = PhaseCurrents::balanced(amp, theta, phi);
            assert!((abc.a + abc.b + abc.c).abs() < 1e-9);
            let dq = dq0_transform(&abc, theta);
            let (d0, q0) = *first.get_or_insert((dq.d, dq.q));
            assert!((dq.d - d0).abs() < 1e-9 && (dq.q - q0).abs() < 1e-9);
            assert!(dq.zero.abs() < 1e-12);
        }
        let (d, q) = first.unwrap();
        assert!((d.hypot(q) - amp).abs() < 1e-12);
        assert!((d - amp * phi.cos()).abs() < 1e-12);
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = PhaseCurrents::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let theta = rng.random_range(-10.0..10.0);
            let back = inverse_dq0(&dq0_transform(&x, theta), theta);
            for (u, v) in [(x.a, back.a), (x.b, back.b), (x.c, back.c)] {
                assert!((u - v).abs() < 1e-12, "{u} {v}");
            }
        }
    }

    #[test]
    fn zero_error_outputs_integrator() {
        let gains = PiGains {
            kp: 2.0,
            ki: 100.0,
            voltage_limit: 10.0,
        };
        let state = PiState {
            integral_d: 1.5,
            integral_q: -0.25,
        };
        let i = DqCurrents::new(3.0, -1.0, 0.0, 0.2);
        let (v, next) = pi_current_step(&i, &i, &gains, &state, 1e-4);
        assert_eq!((v.d, v.q), (1.5, -0.25));
        assert_eq!(next, state);
    }

    #[test]
    fn integrator_bounded_when_saturated() {
        let gains = PiGains {
            kp: 1.0,
            ki: 1e4,
            voltage_limit: 12.0,
        };
        let mut ctl = CurrentController::new(gains, 1e-4).unwrap();
        let reference = DqCurrents::new(1e3, -1e3, 0.0, 0.0);
        for _ in 0..10_000 {
            let v = ctl.step(&reference, &DqCurrents::default());
            assert!(v.d.abs() <= 12.0 && v.q.abs() <= 12.0);
            assert!(ctl.state().integral_d.abs() <= 12.0 && ctl.state().integral_q.abs() <= 12.0);
        }
        assert_eq!(ctl.state().integral_d, 12.0);
    }

    #[test]
    fn step_response_matches_first_order_lag() {
        let axis = RlAxis {
            resistance: 0.5,
            inductance: 1e-3,
        };
        let wc = 1000.0;
        let dt = 5e-5;
        let gains = PiGains::from_bandwidth(axis.resistance, axis.inductance, wc, 48.0).unwrap();
        let mut ctl = CurrentController::new(gains, dt).unwrap();
        let target = 2.0;
        let reference = DqCurrents::new(0.0, target, 0.0, 0.0);
        let (mut id, mut iq) = (0.0, 0.0);
        let mut t90 = None;
        for k in 1..=200 {
            let v = ctl.step(&reference, &DqCurrents::new(id, iq, 0.0, 0.0));
            id = axis.step(id, v.d, dt);
            iq = axis.step(iq, v.q, dt);
            let t = k as f64 * dt;
            let expected: f64 = target * (1.0 - (-wc * t).exp());
            assert!((iq - expected).abs() < 0.05 * target, "t {t}: {iq} vs {expected}");
            if t90.is_none() && iq >= 0.9 * target {
                t90 = Some(t);
            }
        }
        assert!(id.abs() < 1e-12);
        let t90 = t90.unwrap();
        assert!(t90 <= 10f64.ln() / wc + dt, "{t90}");
    }

    #[test]
    fn invalid_gains_rejected() {
        assert!(PiGains::from_bandwidth(0.0, 1e-3, 100.0, 1.0).is_err());
        assert!(CurrentController::new(
            PiGains {
                kp: 1.0,
                ki: 1.0,
                voltage_limit: 1.0
            },
            0.0
        )
        .is_err());
    }

    fn phase() -> impl Strategy<Value = PhaseCurrents> {
        (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(a, b, c)| PhaseCurrents::new(a, b, c))
    }

    proptest! {
        #[test]
        fn power_matches_with_three_halves(v in phase(), i in phase(), theta in -10.0..10.0f64) {
            let p_abc = v.power(&i);
            let p_dq = dq0_transform(&v, theta).power(&dq0_transform(&i, theta));
            prop_assert!((p_abc - p_dq).abs() <= 1e-9 * p_abc.abs().max(1.0));
        }

        #[test]
        fn inverse_is_linear(d in -20.0..20.0f64, q in -20.0..20.0f64, z in -5.0..5.0f64,
                             alpha in -4.0..4.0f64, theta in -10.0..10.0f64) {
            let x = DqCurrents::new(d, q, z, theta);
            let scaled = inverse_dq0(&DqCurrents::new(alpha * d, alpha * q, alpha * z, theta), theta);
            let base = inverse_dq0(&x, theta);
            prop_assert!((scaled.a - alpha * base.a).abs() < 1e-10);
            prop_assert!((scaled.b - alpha * base.b).abs() < 1e-10);
            prop_assert!((scaled.c - alpha * base.c).abs() < 1e-10);
        }
    }
}
