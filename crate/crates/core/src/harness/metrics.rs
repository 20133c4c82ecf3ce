//! Per-run metrics recomputed from a finished trace.

use serde::{Deserialize, Serialize};

use crate::kernel::{ParsedTrace, Payload, TraceError};
use crate::safety::TriggerReason;
use crate::scenario::{Assignment, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyTrigger {
    pub tick: u64,
    pub reason: TriggerReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `None` when the ego never had another body to measure against.
    pub min_clearance: Option<f64>,
    pub time_to_goal: Option<f64>,
    pub distance_traveled: f64,
    pub final_speed: f64,
    pub ticks: u64,
    pub safety_trigger: Option<SafetyTrigger>,
    /// Indices of faults that were active on at least one tick.
    pub fault_windows_active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: u64,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
    pub outcome: Outcome,
    pub metrics: RunMetrics,
    pub digest: String,
}

/// Outcome precedence: collision, goal, safety stop, timeout. A safety stop
/// needs a latch and a standstill at the end of the run.
pub fn compute_metrics(bytes: &[u8]) -> Result<RunReport, TraceError> {
    let t = ParsedTrace::from_bytes(bytes)?;
    let m = &t.header.manifest;
    let mut min_clearance: Option<f64> = None;
    let mut collision = false;
    let mut time_to_goal = None;
    let mut distance = 0.0;
    let mut prev = m.spec.ego.state.pose.position();
    let mut faults: Vec<usize> = Vec::new();
    for s in &t.states {
        if let Some(c) = s.clearance {
            min_clearance = Some(min_clearance.map_or(c, |m| m.min(c)));
        }
        collision |= s.collision;
        if s.goal_reached && time_to_goal.is_none() {
            time_to_goal = Some(s.time);
        }
        let p = s.ego.pose.position();
        distance += p.dist(prev);
        prev = p;
        faults.extend(&s.active_faults);
    }
    faults.sort_unstable();
    faults.dedup();

    let safety_trigger = t.messages.iter().find_map(|msg| match &*msg.payload {
        Payload::Verdict(v) => v.reason.map(|reason| SafetyTrigger { tick: v.tick, reason }),
        _ => None,
    });
    let final_speed = t.states.last().map_or(m.spec.ego.state.speed, |s| s.ego.speed);
    let outcome = if collision {
        Outcome::Collision
    } else if time_to_goal.is_some() {
        Outcome::GoalReached
    } else if safety_trigger.is_some() && final_speed == 0.0 {
        Outcome::StoppedBySafety
    } else {
        Outcome::Timeout
    };
    Ok(RunReport {
        run_id: m.run_id,
        seed: m.seed,
        assignments: m.assignments.clone(),
        outcome,
        metrics: RunMetrics {
            min_clearance,
            time_to_goal,
            distance_traveled: distance,
            final_speed,
            ticks: t.end.ticks,
            safety_trigger,
            fault_windows_active: faults,
        },
        digest: crate::kernel::digest(bytes),
    })
}
