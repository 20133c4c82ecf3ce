//! Channel construction, single runs, sweeps, reports and replay.

mod metrics;
mod replay;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, RunMetrics, RunReport, SafetyTrigger};
pub use replay::{check_invariants, replay, ReplayReport};
pub use sweep::{
    evaluate_acceptance, run_sweep, Aggregates, PredicateResult, SweepOptions, SweepReport, SweepRow, CSV_COLUMNS,
    REPORT_FORMAT_VERSION,
};

use crate::kernel::{self, Channel, KernelError, TraceError, TraceLog};
use crate::nominal::{build_map, load_map, Estimate, MapError, NominalChannel, NominalConfig, NominalSetup};
use crate::safety::{SafetyChannel, SafetyConfig};
use crate::scenario::{RunManifest, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("channel config: {0}")]
    Config(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Configuration of every channel implementation, kept apart from scenarios
/// so the same world can be driven by differently tuned stacks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSuiteConfig {
    pub nominal: NominalConfig,
    pub safety: SafetyConfig,
}

impl ChannelSuiteConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.nominal.validate().map_err(HarnessError::Config)?;
        self.safety.validate().map_err(HarnessError::Config)?;
        if self.nominal.id == self.safety.id {
            return Err(HarnessError::Config("nominal and safety ids must differ".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| HarnessError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a suite file; map artifact paths inside it become absolute,
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.nominal.point_map, &mut self.nominal.lane_map].into_iter().flatten() {
            let abs: PathBuf = base.join(&*p);
            *p = abs.display().to_string();
        }
    }
}

/// Instantiates the scenario's channels in declaration order.
pub fn build_channels(spec: &ScenarioSpec, suite: &ChannelSuiteConfig) -> Result<Vec<Box<dyn Channel>>, HarnessError> {
    suite.validate()?;
    let mut out: Vec<Box<dyn Channel>> = Vec::new();
    for id in &spec.channels {
        if *id == suite.nominal.id {
            let world = spec.build_world().map_err(KernelError::from)?;
            let (points, lanes) = match (&suite.nominal.point_map, &suite.nominal.lane_map) {
                (Some(p), Some(l)) => load_map(Path::new(p), Path::new(l))?,
                _ => build_map(&world.statics, suite.nominal.map_spacing)?,
            };
            let ego = &spec.ego;
            let setup = NominalSetup {
                initial: Estimate {
                    pose: ego.state.pose,
                    speed: ego.state.speed,
                },
                wheelbase: ego.params.wheelbase,
                half_width: ego.footprint.width / 2.0,
                mounts: spec.sensors.iter().map(|s| (s.id.clone(), s.mount)).collect(),
                goal: spec.termination.goal,
            };
            out.push(Box::new(NominalChannel::new(suite.nominal.clone(), setup, points, lanes)));
        } else if *id == suite.safety.id {
            out.push(Box::new(SafetyChannel::new(suite.safety.clone())));
        } else {
            return Err(HarnessError::Config(format!(
                "scenario channel `{id}` matches neither `{}` nor `{}`",
                suite.nominal.id, suite.safety.id
            )));
        }
    }
    Ok(out)
}

/// Runs one manifest and returns its trace with the derived report.
pub fn run_manifest(manifest: &RunManifest, suite: &ChannelSuiteConfig) -> Result<(TraceLog, RunReport), HarnessError> {
    let channels = build_channels(&manifest.spec, suite)?;
    let cfg = serde_json::to_value(suite).expect("suite serializes");
    let trace = kernel::run(manifest, channels, cfg)?;
    let report = compute_metrics(trace.as_bytes())?;
    Ok((trace, report))
}

/// A sweepless scenario as a single manifest with its own seed.
pub fn single_manifest(spec: &ScenarioSpec) -> RunManifest {
    let mut spec = spec.clone();
    spec.sweep.clear();
    RunManifest {
        run_id: 0,
        seed: spec.seed,
        assignments: Vec::new(),
        spec,
    }
}
