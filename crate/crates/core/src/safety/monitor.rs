//! Rule evaluation on one snapshot: predicted collision, heartbeat loss and
//! command limit violation.

use serde::{Deserialize, Serialize};

use super::grid::SafetyGrid;
use crate::command::ChannelCommand;
use crate::geom::Pose2D;
use crate::world::Footprint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Cells rated at or above this count as obstacles for path checks.
    pub rating_threshold: f64,
    /// Ticks without a heartbeat after which the monitored channel is lost.
    pub heartbeat_timeout: u64,
    /// Braking deceleration assumed by the envelope, capped by friction.
    pub a_max: f64,
    /// Reaction time, s.
    pub t_react: f64,
    /// Extra standoff, m.
    pub margin: f64,
    /// Largest |accel| the monitored channel may request.
    pub a_cmd_max: f64,
    /// Largest |steer| the monitored channel may request.
    pub steer_max: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            rating_threshold: 0.8,
            heartbeat_timeout: 20,
            a_max: 6.0,
            t_react: 0.1,
            margin: 1.0,
            a_cmd_max: 8.0,
            steer_max: 0.6,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rating_threshold > 0.0 && self.rating_threshold <= 1.0) {
            return Err("monitor.rating_threshold must be in (0, 1]".into());
        }
        if self.heartbeat_timeout == 0 {
            return Err("monitor.heartbeat_timeout must be >= 1".into());
        }
        for (name, v) in [("a_max", self.a_max), ("a_cmd_max", self.a_cmd_max), ("steer_max", self.steer_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("monitor.{name} must be finite and > 0"));
            }
        }
        for (name, v) in [("t_react", self.t_react), ("margin", self.margin)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("monitor.{name} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Distance the ego needs to stop from `v` with deceleration `a`.
    pub fn envelope(&self, v: f64, a: f64) -> f64 {
        self.margin + v * self.t_react + v * v / (2.0 * a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    PredictedCollision,
    HeartbeatLoss,
    LimitViolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Ok,
    Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// Nearest hot cell on the path.
    Cell {
        i: usize,
        j: usize,
        x: f64,
        y: f64,
        rating: f64,
        distance: f64,
        envelope: f64,
    },
    HeartbeatAge { age: u64, timeout: u64 },
    CommandField { field: String, value: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub tick: u64,
    pub status: VerdictStatus,
    /// Highest-priority rule that fired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<TriggerReason>,
    /// One entry per rule that fired, highest priority first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<Evidence>,
    /// Free distance ahead along the ego's corridor, if a hot cell lies on it.
    pub path_clearance: Option<f64>,
    pub heartbeat_age: u64,
}

impl Verdict {
    pub fn is_trigger(&self) -> bool {
        self.status == VerdictStatus::Trigger
    }
}

pub struct MonitorInput<'a> {
    pub tick: u64,
    pub grid: &'a SafetyGrid,
    pub pose: Pose2D,
    pub speed: f64,
    pub footprint: Footprint,
    pub heartbeat_age: u64,
    pub last_command: Option<&'a ChannelCommand>,
    /// Deceleration available for braking.
    pub decel: f64,
}

/// Nearest hot cell in the straight corridor ahead of the ego, with the free
/// distance from the front bumper to it. The corridor is as wide as the
/// footprint; cells are padded by half their diagonal.
pub fn path_clearance(grid: &SafetyGrid, pose: &Pose2D, fp: &Footprint, threshold: f64) -> Option<(f64, (usize, usize))> {
    let slack = grid.resolution * std::f64::consts::SQRT_2 / 2.0;
    let mut best: Option<(f64, (usize, usize))> = None;
    for (i, j) in grid.hot_cells(threshold) {
        let local = pose.to_local(grid.cell_center(i, j));
        if local.y.abs() > fp.width / 2.0 + slack || local.x + slack < -fp.length / 2.0 {
            continue;
        }
        let d = (local.x - slack - fp.length / 2.0).max(0.0);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, (i, j)));
        }
    }
    best
}

pub fn monitor(input: &MonitorInput<'_>, cfg: &MonitorConfig) -> Verdict {
    let mut evidence = Vec::new();
    let mut reason = None;

    let pc = path_clearance(input.grid, &input.pose, &input.footprint, cfg.rating_threshold);
    if let Some((d, (i, j))) = pc {
        let env = cfg.envelope(input.speed, input.decel);
        if d < env {
            let c = input.grid.cell_center(i, j);
            reason.get_or_insert(TriggerReason::PredictedCollision);
            evidence.push(Evidence::Cell {
                i,
                j,
                x: c.x,
                y: c.y,
                rating: input.grid.rating(i, j),
                distance: d,
                envelope: env,
            });
        }
    }
    if input.heartbeat_age > cfg.heartbeat_timeout {
        reason.get_or_insert(TriggerReason::HeartbeatLoss);
        evidence.push(Evidence::HeartbeatAge {
            age: input.heartbeat_age,
            timeout: cfg.heartbeat_timeout,
        });
    }
    if let Some(c) = input.last_command {
        let mut fired = false;
        if c.accel.abs() > cfg.a_cmd_max {
            fired = true;
            evidence.push(Evidence::CommandField {
                field: "accel".into(),
                value: c.accel,
                limit: cfg.a_cmd_max,
            });
        }
        if c.steer.abs() > cfg.steer_max {
            fired = true;
            evidence.push(Evidence::CommandField {
                field: "steer".into(),
                value: c.steer,
                limit: cfg.steer_max,
            });
        }
        if fired {
            reason.get_or_insert(TriggerReason::LimitViolation);
        }
    }
    Verdict {
        tick: input.tick,
        status: if reason.is_some() { VerdictStatus::Trigger } else { VerdictStatus::Ok },
        reason,
        evidence,
        path_clearance: pc.map(|(d, _)| d),
        heartbeat_age: input.heartbeat_age,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;

    fn grid_with_hot(cells: &[(usize, usize)]) -> SafetyGrid {
        let mut g = SafetyGrid::empty(Vec2::new(-20.0, -20.0), 0.5, 80, 80);
        for &(i, j) in cells {
            g.ratings[j * 80 + i] = 1.0;
        }
        g
    }

    fn cmd(accel: f64, steer: f64) -> ChannelCommand {
        ChannelCommand {
            channel_id: "nominal".into(),
            priority: 1,
            accel,
            steer,
            tick: 0,
        }
    }

    #[test]
    fn corridor_distance_from_front_bumper() {
        // Cell centre at x = 10.25, y = 0.25.
        let g = grid_with_hot(&[(60, 40)]);
        let (d, cell) = path_clearance(&g, &Pose2D::new(0.0, 0.0, 0.0), &Footprint::CAR, 0.8).unwrap();
        assert_eq!(cell, (60, 40));
        let slack = 0.5 * std::f64::consts::SQRT_2 / 2.0;
        assert!((d - (10.25 - slack - 2.25)).abs() < 1e-12);
        // Facing away: nothing ahead.
        assert!(path_clearance(&g, &Pose2D::new(0.0, 0.0, std::f64::consts::PI), &Footprint::CAR, 0.8).is_none());
        // Off to the side.
        let g = grid_with_hot(&[(60, 50)]);
        assert!(path_clearance(&g, &Pose2D::new(0.0, 0.0, 0.0), &Footprint::CAR, 0.8).is_none());
    }

    #[test]
    fn reason_priority_table() {
        let cfg = MonitorConfig::default();
        let near = grid_with_hot(&[(50, 40)]);
        let empty = grid_with_hot(&[]);
        let ok = cmd(1.0, 0.0);
        let bad = cmd(9.0, 0.0);
        for mask in 0u8..8 {
            let (pc, hb, lv) = (mask & 1 != 0, mask & 2 != 0, mask & 4 != 0);
            let input = MonitorInput {
                tick: 3,
                grid: if pc { &near } else { &empty },
                pose: Pose2D::new(0.0, 0.0, 0.0),
                speed: 10.0,
                footprint: Footprint::CAR,
                heartbeat_age: if hb { 21 } else { 20 },
                last_command: Some(if lv { &bad } else { &ok }),
                decel: 6.0,
            };
            let v = monitor(&input, &cfg);
            let expected = if pc {
                Some(TriggerReason::PredictedCollision)
            } else if hb {
                Some(TriggerReason::HeartbeatLoss)
            } else if lv {
                Some(TriggerReason::LimitViolation)
            } else {
                None
            };
            assert_eq!(v.reason, expected, "mask {mask}");
            assert_eq!(v.is_trigger(), expected.is_some());
            assert_eq!(v.evidence.len(), mask.count_ones() as usize);
        }
    }

    #[test]
    fn envelope_boundary() {
        let cfg = MonitorConfig::default();
        // Hot cell far enough at 5 m/s but not at 10 m/s.
        let g = grid_with_hot(&[(56, 40)]);
        let mk = |speed| MonitorInput {
            tick: 0,
            grid: &g,
            pose: Pose2D::new(0.0, 0.0, 0.0),
            speed,
            footprint: Footprint::CAR,
            heartbeat_age: 1,
            last_command: None,
            decel: 6.0,
        };
        let d = path_clearance(&g, &Pose2D::new(0.0, 0.0, 0.0), &Footprint::CAR, 0.8).unwrap().0;
        assert!(cfg.envelope(5.0, 6.0) < d && d < cfg.envelope(10.0, 6.0));
        assert!(!monitor(&mk(5.0), &cfg).is_trigger());
        assert_eq!(monitor(&mk(10.0), &cfg).reason, Some(TriggerReason::PredictedCollision));
    }
}
