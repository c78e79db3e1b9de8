use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

/// Raibert foothold: `x_f = ẋ T_s / 2 + k (ẋ − ẋ_ref)` per horizontal axis,
/// added to `neutral`, the ground projection of the leg's neutral foot
/// position. The returned height is `neutral.z`.
pub fn raibert_foot_placement(
    velocity: &Vector2<f64>,
    velocity_ref: &Vector2<f64>,
    stance_duration: f64,
    gain: f64,
    neutral: &Vector3<f64>,
) -> Vector3<f64> {
    let offset = velocity * stance_duration / 2.0 + gain * (velocity - velocity_ref);
    Vector3::new(neutral.x + offset.x, neutral.y + offset.y, neutral.z)
}

/// Point on a swing trajectory. Derivatives are with respect to the phase
/// `s`; divide by the swing duration (squared for acceleration) for time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl SwingSample {
    pub fn time_scaled(self, duration: f64) -> Self {
        Self {
            position: self.position,
            velocity: self.velocity / duration,
            acceleration: self.acceleration / (duration * duration),
        }
    }
}

// Cubic Bezier with doubled end points, B(u) = a + (b − a)(3u² − 2u³), and
// its first two derivatives.
fn ease(a: f64, b: f64, u: f64) -> (f64, f64, f64) {
    let d = b - a;
    let h = u * u * (3.0 - 2.0 * u);
    (
        a * (1.0 - h) + b * h,
        d * 6.0 * u * (1.0 - u),
        d * (6.0 - 12.0 * u),
    )
}

/// Composite Bezier swing from `start` to `foothold`.
///
/// Horizontal coordinates follow one cubic with zero end velocities. The
/// vertical coordinate rises to `foothold.z + apex_height` at `s = 0.5` and
/// descends onto the foothold, each half a cubic with zero end velocities.
pub fn swing_trajectory(start: &Vector3<f64>, foothold: &Vector3<f64>, apex_height: f64, s: f64) -> Result<SwingSample> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::PhaseOutOfRange(s));
    }
    let (x, vx, ax) = ease(start.x, foothold.x, s);
    let (y, vy, ay) = ease(start.y, foothold.y, s);
    let apex = foothold.z + apex_height;
    let (z, vz, az) = if s <= 0.5 {
        let (z, v, a) = ease(start.z, apex, 2.0 * s);
        (z, 2.0 * v, 4.0 * a)
    } else {
        let (z, v, a) = ease(apex, foothold.z, 2.0 * s - 1.0);
        (z, 2.0 * v, 4.0 * a)
    };
    Ok(SwingSample {
        position: Vector3::new(x, y, z),
        velocity: Vector3::new(vx, vy, vz),
        acceleration: Vector3::new(ax, ay, az),
    })
}
