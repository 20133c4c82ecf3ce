//! The safety channel: a ground-truth occupancy grid, a rule monitor over
//! the nominal channel, and a latched jerk-limited stop.

mod grid;
mod monitor;
mod stop;

use serde::{Deserialize, Serialize};

pub use grid::{build_grid, GridConfig, SafetyGrid};
pub use monitor::{monitor, path_clearance, Evidence, MonitorConfig, MonitorInput, TriggerReason, Verdict, VerdictStatus};
pub use stop::{stopping_distance, SafeStopPlan};

use crate::command::{Actuation, ChannelCommand};
use crate::kernel::{command_topic, heartbeat_topic, Channel, ChannelError, ChannelEvent, ChannelInput, ChannelOutput, Payload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyConfig {
    pub id: String,
    pub priority: i32,
    /// Channel whose heartbeat and commands are watched.
    pub monitored: String,
    pub grid: GridConfig,
    pub monitor: MonitorConfig,
    /// Jerk limit of the stop profile, m/s³.
    pub stop_jerk: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            id: "safety".into(),
            priority: 10,
            monitored: "nominal".into(),
            grid: GridConfig::default(),
            monitor: MonitorConfig::default(),
            stop_jerk: 10.0,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.monitored.is_empty() {
            return Err("safety.id and safety.monitored must be non-empty".into());
        }
        if self.id == self.monitored {
            return Err("safety cannot monitor itself".into());
        }
        if !(self.stop_jerk.is_finite() && self.stop_jerk > 0.0) {
            return Err("safety.stop_jerk must be finite and > 0".into());
        }
        self.grid.validate()?;
        self.monitor.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Latch {
    pub tick: u64,
    pub reason: TriggerReason,
    pub plan: SafeStopPlan,
}

pub struct SafetyChannel {
    cfg: SafetyConfig,
    last_heartbeat: Option<u64>,
    last_command: Option<ChannelCommand>,
    latch: Option<Latch>,
    steps: u64,
}

impl SafetyChannel {
    pub fn new(cfg: SafetyConfig) -> Self {
        SafetyChannel {
            cfg,
            last_heartbeat: None,
            last_command: None,
            latch: None,
            steps: 0,
        }
    }

    pub fn latch(&self) -> Option<&Latch> {
        self.latch.as_ref()
    }

    fn heartbeat_age(&self, tick: u64) -> u64 {
        self.last_heartbeat.map_or(tick + 1, |t| tick - t)
    }
}

impl Channel for SafetyChannel {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn priority(&self) -> i32 {
        self.cfg.priority
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![heartbeat_topic(&self.cfg.monitored), command_topic(&self.cfg.monitored)]
    }

    fn step(&mut self, input: &ChannelInput<'_>) -> Result<ChannelOutput, ChannelError> {
        for m in input.inbox {
            match &*m.payload {
                Payload::Heartbeat(h) if h.channel_id == self.cfg.monitored => {
                    self.last_heartbeat = Some(self.last_heartbeat.map_or(m.tick, |t| t.max(m.tick)));
                }
                Payload::ChannelCommand(c) if c.channel_id == self.cfg.monitored => {
                    self.last_command = Some(c.clone());
                }
                _ => {}
            }
        }
        self.steps += 1;
        let mut out = ChannelOutput {
            heartbeat: Some(self.steps),
            ..Default::default()
        };

        if self.latch.is_none() {
            let scene = input
                .scene()
                .ok_or_else(|| ChannelError("no ground-truth scene in inbox".into()))?;
            let ego = scene.ego();
            let grid = build_grid(scene, &self.cfg.grid);
            let decel = self.cfg.monitor.a_max.min(scene.environment.max_accel());
            let verdict = monitor(
                &MonitorInput {
                    tick: input.tick,
                    grid: &grid,
                    pose: ego.state.pose,
                    speed: ego.state.speed,
                    footprint: ego.footprint,
                    heartbeat_age: self.heartbeat_age(input.tick),
                    last_command: self.last_command.as_ref(),
                    decel,
                },
                &self.cfg.monitor,
            );
            if let Some(reason) = verdict.reason {
                self.latch = Some(Latch {
                    tick: input.tick,
                    reason,
                    // Braking already under way is kept rather than released.
                    plan: SafeStopPlan::with_initial_decel(
                        ego.state.speed,
                        -ego.state.accel,
                        self.cfg.stop_jerk,
                        decel,
                    ),
                });
            }
            out.events.push(ChannelEvent::Verdict(verdict));
        }
        if let Some(l) = &self.latch {
            out.command = Some(Actuation {
                accel: l.plan.accel_for_tick(input.tick - l.tick, input.dt),
                steer: 0.0,
            });
        }
        Ok(out)
    }
}
