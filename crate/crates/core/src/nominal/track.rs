//! Pure-pursuit steering and proportional speed control.

use serde::{Deserialize, Serialize};

use super::localize::Estimate;
use crate::geom::{fm, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub lookahead_min: f64,
    /// Lookahead growth with speed, s.
    pub lookahead_gain: f64,
    pub speed_gain: f64,
    /// Bound on the speed controller's output, m/s².
    pub comfort_accel: f64,
    /// Deceleration requested when no candidate is usable.
    pub brake_accel: f64,
    /// Overrides the lane speed limit when set.
    pub cruise_speed: Option<f64>,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            lookahead_min: 3.0,
            lookahead_gain: 0.5,
            speed_gain: 1.0,
            comfort_accel: 3.0,
            brake_accel: 6.0,
            cruise_speed: None,
        }
    }
}

impl TrackingConfig {
    pub fn lookahead(&self, speed: f64) -> f64 {
        self.lookahead_min.max(self.lookahead_gain * speed)
    }
}

/// Steering angle that arcs the rear axle through the first trajectory point
/// at least `lookahead` ahead (the last point if none is that far).
pub fn pure_pursuit(est: &Estimate, points: &[Pose2D], wheelbase: f64, lookahead: f64) -> f64 {
    let ahead = points
        .iter()
        .map(|p| est.pose.to_local(p.position()))
        .filter(|l| l.x > 0.0);
    let mut target = None;
    for l in ahead {
        target = Some(l);
        if l.norm() >= lookahead {
            break;
        }
    }
    match target {
        Some(l) => {
            let ld = l.norm();
            let alpha = fm::atan2(l.y, l.x);
            fm::atan(2.0 * wheelbase * fm::sin(alpha) / ld)
        }
        None => 0.0,
    }
}

pub fn speed_accel(speed: f64, target: f64, cfg: &TrackingConfig) -> f64 {
    (cfg.speed_gain * (target - speed)).clamp(-cfg.comfort_accel, cfg.comfort_accel)
}
