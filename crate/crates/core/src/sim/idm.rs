//! Car-following dynamics: Intelligent Driver Model plus Krauss imperfection.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed v0 (m/s).
    pub desired_speed: f64,
    /// Maximum acceleration a (m/s²).
    pub max_accel: f64,
    /// Comfortable deceleration b (m/s²).
    pub comfortable_decel: f64,
    /// Minimum standstill gap s0 (m).
    pub min_gap: f64,
    /// Desired time headway T (s).
    pub headway_time: f64,
    /// Hard lower bound on the returned acceleration is `-emergency_decel` (m/s²).
    pub emergency_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 20.0,
            max_accel: 2.0,
            comfortable_decel: 2.0,
            min_gap: 2.0,
            headway_time: 1.0,
            emergency_decel: 9.0,
        }
    }
}

impl IdmParams {
    pub fn is_valid(&self) -> bool {
        [
            self.desired_speed,
            self.max_accel,
            self.comfortable_decel,
            self.min_gap,
            self.headway_time,
            self.emergency_decel,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// IDM acceleration for a vehicle at speed `v` with bumper-to-bumper `gap`
/// to a leader moving at `lead_speed`. Pass `f64::INFINITY` for a free road.
///
/// The result never drops below `-emergency_decel`; a non-positive gap
/// yields exactly that emergency value.
pub fn idm_acceleration(v: f64, gap: f64, lead_speed: f64, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.desired_speed).powi(4);
    if gap == f64::INFINITY {
        return (p.max_accel * free).max(-p.emergency_decel);
    }
    if gap <= 0.0 {
        return -p.emergency_decel;
    }
    let dynamic =
        v * p.headway_time + v * (v - lead_speed) / (2.0 * (p.max_accel * p.comfortable_decel).sqrt());
    let desired_gap = p.min_gap + dynamic.max(0.0);
    let interaction = (desired_gap / gap).powi(2);
    (p.max_accel * (free - interaction)).max(-p.emergency_decel)
}

/// Krauss-style imperfect speed update:
/// `max(0, min(v_desired, v + a·dt) − sigma·a·dt·u)` with `u ~ U[0, 1)`.
///
/// Exactly one uniform draw is consumed regardless of `sigma`.
pub fn krauss_speed_update<R: Rng + ?Sized>(
    v: f64,
    v_desired: f64,
    sigma: f64,
    max_accel: f64,
    dt: f64,
    rng: &mut R,
) -> f64 {
    let u: f64 = rng.gen();
    let target = v_desired.min(v + max_accel * dt);
    (target - sigma * max_accel * dt * u).max(0.0)
}
