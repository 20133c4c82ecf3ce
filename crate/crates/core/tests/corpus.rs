//! The committed scenarios validate, pass their own acceptance block, and
//! reproduce the recorded digests.

mod common;

use std::collections::BTreeMap;

use common::{parse, run_single, scenario, scenarios_dir, CORPUS};
use dualsim::harness::{check_invariants, replay, run_sweep, ChannelSuiteConfig, SweepOptions};
use dualsim::kernel::{ParsedTrace, TraceError};
use dualsim::scenario::{expand_sweep, DEFAULT_SWEEP_CAP};

const GOLDEN: &str = "golden.json";

/// Set to rewrite the digest file after an intended behaviour change.
const BLESS_VAR: &str = "DUALSIM_BLESS";

#[test]
fn corpus_passes_acceptance_and_matches_goldens() {
    let path = scenarios_dir().join(GOLDEN);
    let mut got: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in CORPUS {
        let spec = scenario(name);
        spec.validate().unwrap();
        let plan = expand_sweep(&spec, DEFAULT_SWEEP_CAP).unwrap();
        let report = run_sweep(&plan, &spec.acceptance, &ChannelSuiteConfig::default(), &SweepOptions::default()).unwrap();
        assert!(report.aggregates.passed, "{name}: {:#?}", report.aggregates.acceptance);
        got.insert(name.into(), report.rows.iter().map(|r| r.digest.clone().unwrap()).collect());
    }
    if std::env::var_os(BLESS_VAR).is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
        return;
    }
    let want: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&std::fs::read_to_string(&path).expect("golden digests present")).unwrap();
    for (name, digests) in &got {
        assert_eq!(Some(digests), want.get(name), "{name} drifted; rerun with {BLESS_VAR}=1 if intended");
    }
}

#[test]
fn recorded_trace_replays_identically() {
    let (trace, _) = run_single(&scenario("silent-nominal"));
    let r = replay(trace.as_bytes()).unwrap();
    assert!(r.ok(), "{r:?}");
}

#[test]
fn corpus_traces_satisfy_structural_invariants() {
    for name in ["silent-nominal", "urban-grid"] {
        let (trace, _) = run_single(&scenario(name));
        assert_eq!(check_invariants(&parse(&trace)), Vec::<String>::new(), "{name}");
    }
}

#[test]
fn truncated_trace_names_last_complete_tick() {
    let (trace, _) = run_single(&scenario("silent-nominal"));
    let bytes = trace.as_bytes();
    let cut = &bytes[..bytes.len() * 2 / 3];
    match ParsedTrace::from_bytes(cut) {
        Err(TraceError::Truncated { last_tick: Some(_) }) => {}
        other => panic!("unexpected {:?}", other.map(|t| t.end)),
    }
}

#[test]
fn nominal_output_does_not_depend_on_ground_truth_routing() {
    let base = scenario("curved-lane");
    let mut peek = base.clone();
    peek.routing.ground_truth.push("nominal".into());
    let nominal_msgs = |spec| {
        let (trace, _) = run_single(spec);
        parse(&trace)
            .messages
            .into_iter()
            .filter(|m| m.publisher == "nominal")
            .map(|m| serde_json::to_string(&m).unwrap())
            .collect::<Vec<_>>()
    };
    let (a, b) = (nominal_msgs(&base), nominal_msgs(&peek));
    assert!(!a.is_empty());
    assert!(a == b, "nominal channel reacted to ground truth");
}
