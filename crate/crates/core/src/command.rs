use serde::{Deserialize, Serialize};

use crate::world::{Control, VehicleParams};

/// The actuation contract shared by every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCommand {
    pub channel_id: String,
    /// Higher wins arbitration.
    pub priority: i32,
    pub accel: f64,
    pub steer: f64,
    pub tick: u64,
}

impl ChannelCommand {
    pub fn control(&self) -> Control {
        Control {
            accel: self.accel,
            steer: self.steer,
        }
    }
}

/// What a channel hands the kernel in one step, before it is stamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    pub accel: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub channel_id: String,
    /// Number of successful steps so far, this one included.
    pub counter: u64,
}

/// Physical bounds a command is clamped to after a channel fault shifts it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandLimits {
    pub steer_max: f64,
    pub accel_max: f64,
}

impl CommandLimits {
    pub fn from_vehicle(p: &VehicleParams) -> Self {
        CommandLimits {
            steer_max: p.steer_max,
            accel_max: p.accel_limit,
        }
    }

    pub fn clamp(&self, accel: f64, steer: f64) -> (f64, f64) {
        (
            accel.clamp(-self.accel_max, self.accel_max),
            steer.clamp(-self.steer_max, self.steer_max),
        )
    }
}
