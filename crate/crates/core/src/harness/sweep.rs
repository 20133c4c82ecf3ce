//! Parallel, resumable sweep execution and report assembly.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io_err, run_manifest, ChannelSuiteConfig, HarnessError, RunMetrics, RunReport};
use crate::scenario::{Acceptance, Assignment, Outcome, RunManifest, SweepPlan};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Column order of the CSV report. Sweep variables follow as `set:<path>`.
pub const CSV_COLUMNS: [&str; 13] = [
    "run_id",
    "seed",
    "status",
    "outcome",
    "min_clearance",
    "time_to_goal",
    "distance_traveled",
    "final_speed",
    "ticks",
    "trigger_tick",
    "trigger_reason",
    "faults_active",
    "digest",
];

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub parallelism: usize,
    /// Per-run traces and reports go to `<out>/runs/<id>/` when set.
    pub out_dir: Option<PathBuf>,
    /// Reuse runs whose report already exists under `out_dir`.
    pub resume: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            parallelism: 1,
            out_dir: None,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: u64,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    /// Diagnostics for a run that failed to complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    fn ok(r: RunReport) -> Self {
        SweepRow {
            run_id: r.run_id,
            seed: r.seed,
            assignments: r.assignments,
            outcome: Some(r.outcome),
            metrics: Some(r.metrics),
            digest: Some(r.digest),
            error: None,
        }
    }

    fn errored(m: &RunManifest, error: String) -> Self {
        SweepRow {
            run_id: m.run_id,
            seed: m.seed,
            assignments: m.assignments.clone(),
            outcome: None,
            metrics: None,
            digest: None,
            error: Some(error),
        }
    }

    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateResult {
    pub predicate: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub runs: u64,
    pub errored: u64,
    pub collisions: u64,
    pub safety_triggers: u64,
    pub worst_min_clearance: Option<f64>,
    pub acceptance: Vec<PredicateResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub format_version: u32,
    pub scenario: String,
    pub rows: Vec<SweepRow>,
    pub aggregates: Aggregates,
}

/// Aggregates and acceptance verdicts, a pure function of the rows. Errored
/// rows always fail acceptance.
pub fn evaluate_acceptance(rows: &[SweepRow], acc: &Acceptance) -> Aggregates {
    let done: Vec<&SweepRow> = rows.iter().filter(|r| !r.is_errored()).collect();
    let errored = (rows.len() - done.len()) as u64;
    let collisions = done.iter().filter(|r| r.outcome == Some(Outcome::Collision)).count() as u64;
    let triggers = done
        .iter()
        .filter(|r| r.metrics.as_ref().is_some_and(|m| m.safety_trigger.is_some()))
        .count() as u64;
    let worst = done
        .iter()
        .filter_map(|r| r.metrics.as_ref().and_then(|m| m.min_clearance))
        .fold(None, |w: Option<f64>, c| Some(w.map_or(c, |w| w.min(c))));

    let mut preds = vec![PredicateResult {
        predicate: "no_errors".into(),
        passed: errored == 0,
        detail: format!("{errored} errored runs"),
    }];
    if acc.no_collisions {
        preds.push(PredicateResult {
            predicate: "no_collisions".into(),
            passed: collisions == 0,
            detail: format!("{collisions} runs collided"),
        });
    }
    if let Some(max) = acc.max_safety_triggers {
        preds.push(PredicateResult {
            predicate: "max_safety_triggers".into(),
            passed: triggers <= max,
            detail: format!("{triggers} triggered runs, limit {max}"),
        });
    }
    if let Some(min) = acc.min_clearance {
        let passed = worst.is_none_or(|w| w >= min);
        preds.push(PredicateResult {
            predicate: "min_clearance".into(),
            passed,
            detail: format!("worst {}, bound {min}", worst.map_or("none".to_string(), |w| w.to_string())),
        });
    }
    if let Some(allowed) = &acc.allowed_outcomes {
        let bad: Vec<u64> = done
            .iter()
            .filter(|r| r.outcome.is_some_and(|o| !allowed.contains(&o)))
            .map(|r| r.run_id)
            .collect();
        preds.push(PredicateResult {
            predicate: "allowed_outcomes".into(),
            passed: bad.is_empty(),
            detail: format!("runs with other outcomes: {bad:?}"),
        });
    }
    Aggregates {
        runs: rows.len() as u64,
        errored,
        collisions,
        safety_triggers: triggers,
        worst_min_clearance: worst,
        passed: preds.iter().all(|p| p.passed),
        acceptance: preds,
    }
}

pub fn run_dir(out: &Path, run_id: u64) -> PathBuf {
    out.join("runs").join(run_id.to_string())
}

/// Writes via a temporary sibling so readers never see partial files.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn load_done(dir: &Path, m: &RunManifest) -> Option<RunReport> {
    let text = std::fs::read_to_string(dir.join("report.json")).ok()?;
    let r: RunReport = serde_json::from_str(&text).ok()?;
    (r.run_id == m.run_id && r.seed == m.seed && r.assignments == m.assignments).then_some(r)
}

fn execute(m: &RunManifest, suite: &ChannelSuiteConfig, opts: &SweepOptions) -> Result<RunReport, HarnessError> {
    let dir = opts.out_dir.as_ref().map(|o| run_dir(o, m.run_id));
    if let (Some(dir), true) = (&dir, opts.resume) {
        if let Some(r) = load_done(dir, m) {
            return Ok(r);
        }
    }
    let (trace, report) = run_manifest(m, suite)?;
    if let Some(dir) = dir {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join("trace.ndjson"), trace.as_bytes())?;
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_atomic(&dir.join("report.json"), json.as_bytes())?;
    }
    Ok(report)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".into()
    }
}

/// Executes every run of `plan` on a worker pool. Rows come back ordered by
/// run id whatever the completion order; a failing run becomes an errored
/// row and the sweep carries on.
pub fn run_sweep(
    plan: &SweepPlan,
    acceptance: &Acceptance,
    suite: &ChannelSuiteConfig,
    opts: &SweepOptions,
) -> Result<SweepReport, HarnessError> {
    suite.validate()?;
    if let Some(out) = &opts.out_dir {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|m| match catch_unwind(AssertUnwindSafe(|| execute(m, suite, opts))) {
                Ok(Ok(r)) => SweepRow::ok(r),
                Ok(Err(e)) => SweepRow::errored(m, e.to_string()),
                Err(p) => SweepRow::errored(m, format!("panic: {}", panic_message(p))),
            })
            .collect()
    });
    Ok(SweepReport {
        format_version: REPORT_FORMAT_VERSION,
        scenario: plan.scenario.clone(),
        aggregates: evaluate_acceptance(&rows, acceptance),
        rows,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let vars: Vec<String> = self
            .rows
            .first()
            .map(|r| r.assignments.iter().map(|a| format!("set:{}", a.path)).collect())
            .unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = CSV_COLUMNS.iter().copied().chain(vars.iter().map(String::as_str)).chain(["error"]).collect();
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let m = r.metrics.as_ref();
            let mut rec = vec![
                r.run_id.to_string(),
                r.seed.to_string(),
                if r.is_errored() { "errored" } else { "ok" }.to_string(),
                opt(r.outcome),
                opt(m.and_then(|m| m.min_clearance)),
                opt(m.and_then(|m| m.time_to_goal)),
                opt(m.map(|m| m.distance_traveled)),
                opt(m.map(|m| m.final_speed)),
                opt(m.map(|m| m.ticks)),
                opt(m.and_then(|m| m.safety_trigger.as_ref().map(|t| t.tick))),
                opt(m.and_then(|m| {
                    m.safety_trigger
                        .as_ref()
                        .map(|t| serde_json::to_value(t.reason).expect("reason").as_str().unwrap_or_default().to_string())
                })),
                m.map_or(String::new(), |m| {
                    m.fault_windows_active.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
                }),
                opt(r.digest.clone()),
            ];
            rec.extend(r.assignments.iter().map(|a| a.value.to_string()));
            rec.push(opt(r.error.clone()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}
