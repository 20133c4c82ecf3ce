//! Re-execution of a recorded trace and structural checks on it.

use serde::{Deserialize, Serialize};

use super::{run_manifest, ChannelSuiteConfig, HarnessError};
use crate::kernel::{digest, ParsedTrace, Payload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub recorded: String,
    pub replayed: String,
    pub identical: bool,
    /// Structural problems found in the recorded trace.
    pub violations: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.identical && self.violations.is_empty()
    }
}

/// Invariants every well-formed trace satisfies: contiguous ticks, a
/// consistent end record, exclusive collision and goal flags, non-negative
/// clearance, and the highest-priority fresh command applied on each tick.
pub fn check_invariants(t: &ParsedTrace) -> Vec<String> {
    let mut v = Vec::new();
    let staleness = t.header.manifest.spec.staleness;
    for (k, s) in t.states.iter().enumerate() {
        if s.tick != k as u64 {
            v.push(format!("state {k} has tick {}", s.tick));
        }
        if s.collision && s.goal_reached {
            v.push(format!("tick {}: collision and goal together", s.tick));
        }
        if s.clearance.is_some_and(|c| c < 0.0) {
            v.push(format!("tick {}: negative clearance", s.tick));
        }
    }
    if t.end.ticks != t.states.len() as u64 {
        v.push(format!("end reports {} ticks, {} states logged", t.end.ticks, t.states.len()));
    }
    // Latest command per channel as of each tick.
    let mut latest: std::collections::BTreeMap<&str, (i32, u64, f64, f64)> = Default::default();
    let mut msgs = t.messages.iter().peekable();
    for s in &t.states {
        while let Some(m) = msgs.next_if(|m| m.tick <= s.tick) {
            if let Payload::ChannelCommand(c) = &*m.payload {
                latest.insert(&c.channel_id, (c.priority, c.tick, c.accel, c.steer));
            }
        }
        let best = latest
            .iter()
            .filter(|(_, c)| s.tick - c.1 <= staleness)
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(a.0)));
        match (best, &s.applied) {
            (None, None) => {}
            (Some((id, c)), Some(a)) if *id == a.channel_id && c.1 == a.issued && c.2 == s.control.accel && c.3 == s.control.steer => {}
            (b, a) => v.push(format!("tick {}: applied {a:?} but arbitration expects {:?}", s.tick, b.map(|b| b.0))),
        }
    }
    v
}

/// Re-runs the trace's manifest with its recorded channel configuration and
/// compares digests.
pub fn replay(bytes: &[u8]) -> Result<ReplayReport, HarnessError> {
    let t = ParsedTrace::from_bytes(bytes)?;
    let suite: ChannelSuiteConfig = serde_json::from_value(t.header.channels.clone())
        .map_err(|e| HarnessError::Config(format!("trace header channels: {e}")))?;
    let (trace, _) = run_manifest(&t.header.manifest, &suite)?;
    let recorded = digest(bytes);
    let replayed = trace.digest();
    Ok(ReplayReport {
        identical: recorded == replayed,
        recorded,
        replayed,
        violations: check_invariants(&t),
    })
}
