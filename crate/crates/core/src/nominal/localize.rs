//! Complementary GPS/IMU filter.

use serde::{Deserialize, Serialize};

use crate::geom::{normalize_angle, Pose2D, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationConfig {
    /// Weight of the GPS fix against the dead-reckoned prediction.
    pub alpha: f64,
    /// Ticks without any GPS or IMU input before the channel stops driving.
    pub dropout_tolerance: u64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            alpha: 0.1,
            dropout_tolerance: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub pose: Pose2D,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuInput {
    pub accel: f64,
    pub yaw_rate: f64,
}

/// One filter step. The IMU reports what happened over the last step, so the
/// position is predicted from the previous heading and speed before those
/// integrate. `gps` is the ego reference point, already corrected for the
/// antenna mount.
pub fn localize(prev: &Estimate, gps: Option<Vec2>, imu: Option<ImuInput>, dt: f64, alpha: f64) -> Estimate {
    let pred = prev.pose.position() + prev.pose.direction() * (prev.speed * dt);
    let (heading, speed) = match imu {
        Some(m) => (prev.pose.heading + m.yaw_rate * dt, (prev.speed + m.accel * dt).max(0.0)),
        None => (prev.pose.heading, prev.speed),
    };
    let pos = match gps {
        Some(g) => g * alpha + pred * (1.0 - alpha),
        None => pred,
    };
    Estimate {
        pose: Pose2D::new(pos.x, pos.y, normalize_angle(heading)),
        speed,
    }
}
