#![allow(dead_code)]

use std::path::PathBuf;

use dualsim::harness::{run_manifest, single_manifest, ChannelSuiteConfig, RunReport};
use dualsim::kernel::{ParsedTrace, Payload, TraceLog};
use dualsim::scenario::{load_scenario, ScenarioSpec};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const CORPUS: [&str; 5] = ["silent-nominal", "envelope-sweep", "curved-lane", "sweep-grid", "urban-grid"];

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario(name: &str) -> ScenarioSpec {
    let path = scenarios_dir().join(format!("{name}.json"));
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn run_single(spec: &ScenarioSpec) -> (TraceLog, RunReport) {
    run_manifest(&single_manifest(spec), &ChannelSuiteConfig::default()).expect("run completes")
}

pub fn parse(trace: &TraceLog) -> ParsedTrace {
    ParsedTrace::from_bytes(trace.as_bytes()).expect("trace parses")
}

/// `(tick, data)` of every metric with this name.
pub fn metrics(t: &ParsedTrace, name: &str) -> Vec<(u64, serde_json::Value)> {
    t.messages
        .iter()
        .filter_map(|m| match &*m.payload {
            Payload::MetricEvent(e) if e.name == name => Some((m.tick, e.data.clone())),
            _ => None,
        })
        .collect()
}

/// Small seeded generator for test inputs.
pub struct Gen(ChaCha8Rng);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}
