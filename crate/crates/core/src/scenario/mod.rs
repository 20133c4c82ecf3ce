//! Scenario documents: parsing, validation and sweep expansion.
//!
//! A scenario is strict JSON (no duplicate keys, no unknown keys). Channels
//! are referenced only by id; their configuration lives elsewhere.

mod ascii;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, DeserializeSeed, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

pub use ascii::{merge_rectangles, parse_ascii_world, AsciiError, GRID_LANE_WIDTH};
pub use sweep::{apply_overrides, expand_sweep, resolve_path, Assignment, RunManifest, SweepPlan, DEFAULT_SWEEP_CAP};

use crate::error::ValidationError;
use crate::faults::{Fault, FaultSpec, TargetRef};
use crate::geom::{Aabb, Pose2D};
use crate::sensors::{RoutingTable, SensorConfig};
use crate::world::{Actor, ActorKind, ActorState, Environment, Footprint, Lane, StaticObstacle, VehicleParams, Waypoint, World};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_STALENESS: u64 = 5;

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_staleness() -> u64 {
    DEFAULT_STALENESS
}

fn default_channels() -> Vec<String> {
    vec!["nominal".into(), "safety".into()]
}

fn default_ego_id() -> String {
    "ego".into()
}

fn default_true() -> bool {
    true
}

fn car() -> Footprint {
    Footprint::CAR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Commands older than this many ticks are ignored by arbitration.
    #[serde(default = "default_staleness")]
    pub staleness: u64,
    /// Channel ids in registration order.
    #[serde(default = "default_channels")]
    pub channels: Vec<String>,
    pub ego: EgoSpec,
    #[serde(default)]
    pub world: WorldSpec,
    #[serde(default)]
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub routing: Routing,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub sweep: Vec<SweepVariable>,
    pub termination: Termination,
    #[serde(default)]
    pub acceptance: Acceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    #[serde(default = "default_ego_id")]
    pub id: String,
    pub state: ActorState,
    #[serde(default = "car")]
    pub footprint: Footprint,
    #[serde(default)]
    pub params: VehicleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: String,
    pub kind: ActorKind,
    pub state: ActorState,
    /// Defaults by kind: car-sized for vehicles, 0.5 m square for pedestrians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint: Option<Footprint>,
    #[serde(default)]
    pub params: VehicleParams,
    #[serde(default)]
    pub script: Vec<Waypoint>,
}

impl ActorSpec {
    pub fn footprint(&self) -> Footprint {
        self.footprint.unwrap_or(match self.kind {
            ActorKind::Pedestrian => Footprint::PEDESTRIAN,
            _ => Footprint::CAR,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSource {
    /// Path relative to the scenario file.
    File(String),
    Rows(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSource>,
    #[serde(default)]
    pub obstacles: Vec<StaticObstacle>,
    #[serde(default)]
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub environment: Environment,
}

fn default_ground_truth() -> Vec<String> {
    vec!["safety".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Routing {
    /// Sensor id → channel ids.
    #[serde(default)]
    pub sensors: BTreeMap<String, Vec<String>>,
    /// Channels subscribed to the ground-truth topic.
    #[serde(default = "default_ground_truth")]
    pub ground_truth: Vec<String>,
}

impl Default for Routing {
    fn default() -> Self {
        Routing {
            sensors: BTreeMap::new(),
            ground_truth: default_ground_truth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepVariable {
    pub path: String,
    pub values: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub pose: Pose2D,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Termination {
    pub max_time: f64,
    #[serde(default = "default_true")]
    pub stop_on_collision: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Goal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    Collision,
    Timeout,
    StoppedBySafety,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::GoalReached => "goal_reached",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
            Outcome::StoppedBySafety => "stopped_by_safety",
        })
    }
}

/// Pass/fail predicates evaluated over a sweep's rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acceptance {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_collisions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_safety_triggers: Option<u64>,
    /// Lower bound on every run's min_clearance, meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_clearance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_outcomes: Option<Vec<Outcome>>,
}

impl Acceptance {
    pub fn is_empty(&self) -> bool {
        *self == Acceptance::default()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown key at `{path}`: {message}")]
    UnknownKey { path: String, message: String },
    #[error("duplicate key at `{path}`: {message}")]
    DuplicateKey { path: String, message: String },
    #[error("type mismatch at `{path}`: {message}")]
    Type { path: String, message: String },
    #[error("{0}")]
    Invalid(#[from] ValidationError),
    #[error("grid {path}: {source}")]
    Grid { path: String, source: AsciiError },
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sweep expands to {count} runs, above the cap of {cap}")]
    SweepTooLarge { count: u128, cap: u64 },
}

impl ScenarioError {
    /// The document path the error points at, if any.
    pub fn path(&self) -> Option<&str> {
        match self {
            ScenarioError::UnknownKey { path, .. }
            | ScenarioError::DuplicateKey { path, .. }
            | ScenarioError::Type { path, .. }
            | ScenarioError::Grid { path, .. } => Some(path),
            ScenarioError::Invalid(v) => Some(&v.path),
            _ => None,
        }
    }

    fn from_json(e: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof | serde_json::error::Category::Io => {
                ScenarioError::Syntax {
                    line: inner.line(),
                    column: inner.column(),
                    message: strip_position(&inner.to_string()),
                }
            }
            serde_json::error::Category::Data => {
                let message = strip_position(&inner.to_string());
                if message.starts_with("unknown field") || message.starts_with("unknown variant") {
                    ScenarioError::UnknownKey { path, message }
                } else if message.starts_with("duplicate") {
                    ScenarioError::DuplicateKey { path, message }
                } else {
                    ScenarioError::Type { path, message }
                }
            }
        }
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Walks a JSON document and fails on the first object with a repeated key.
struct DupCheck;

impl<'de> Deserialize<'de> for DupCheck {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(DupVisitor)
    }
}

impl<'de> DeserializeSeed<'de> for DupVisitor {
    type Value = DupCheck;
    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<DupCheck, D::Error> {
        d.deserialize_any(self)
    }
}

struct DupVisitor;

impl<'de> Visitor<'de> for DupVisitor {
    type Value = DupCheck;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("any JSON value")
    }

    fn visit_bool<E>(self, _: bool) -> Result<DupCheck, E> {
        Ok(DupCheck)
    }
    fn visit_i64<E>(self, _: i64) -> Result<DupCheck, E> {
        Ok(DupCheck)
    }
    fn visit_u64<E>(self, _: u64) -> Result<DupCheck, E> {
        Ok(DupCheck)
    }
    fn visit_f64<E>(self, _: f64) -> Result<DupCheck, E> {
        Ok(DupCheck)
    }
    fn visit_str<E>(self, _: &str) -> Result<DupCheck, E> {
        Ok(DupCheck)
    }
    fn visit_unit<E>(self) -> Result<DupCheck, E> {
        Ok(DupCheck)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<DupCheck, A::Error> {
        while seq.next_element_seed(DupVisitor)?.is_some() {}
        Ok(DupCheck)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<DupCheck, A::Error> {
        let mut seen = BTreeSet::new();
        while let Some(key) = map.next_key::<String>()? {
            if !seen.insert(key.clone()) {
                return Err(de::Error::custom(format!("duplicate key `{key}`")));
            }
            map.next_value_seed(DupVisitor)?;
        }
        Ok(DupCheck)
    }
}

fn check_duplicates(text: &str) -> Result<(), ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize::<_, DupCheck>(&mut de).map_err(ScenarioError::from_json)?;
    de.end().map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })
}

fn deserialize_unchecked(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    check_duplicates(text)?;
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(ScenarioError::from_json)
}

/// Parses and validates a scenario document. A grid given by file reference
/// is left unresolved and the world geometry is not checked; use
/// [`load_scenario`] to resolve it.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let spec = deserialize_unchecked(text)?;
    spec.validate()?;
    Ok(spec)
}

/// Reads a scenario file, inlines any grid file it references and validates it.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut spec = deserialize_unchecked(&text)?;
    if let Some(GridSource::File(rel)) = &spec.world.grid {
        let grid_path = path.parent().unwrap_or(Path::new(".")).join(rel);
        let grid = std::fs::read_to_string(&grid_path).map_err(|source| ScenarioError::Io {
            path: grid_path.clone(),
            source,
        })?;
        spec.world.grid = Some(GridSource::Rows(grid.lines().map(|l| l.trim_end_matches('\r').to_string()).collect()));
    }
    spec.validate()?;
    Ok(spec)
}

/// Reads and parses a scenario file without resolving grid files, for
/// byte-level round-trip checks.
pub fn read_scenario_text(path: &Path) -> Result<(String, ScenarioSpec), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = parse_scenario(&text)?;
    Ok((text, spec))
}

impl ScenarioSpec {
    /// Canonical serialization: two-space indented JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let v = |path: &str, msg: &str| Err(ValidationError::new(path, msg));
        if self.format_version != FORMAT_VERSION {
            return Err(ValidationError::new(
                "format_version",
                format!("unsupported version {}, expected {FORMAT_VERSION}", self.format_version),
            ));
        }
        if self.name.is_empty() {
            return v("name", "must not be empty");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return v("dt", "must be finite and > 0");
        }
        let t = &self.termination;
        if !(t.max_time.is_finite() && t.max_time > 0.0) {
            return v("termination.max_time", "must be finite and > 0");
        }
        if let Some(g) = &t.goal {
            if !g.pose.is_finite() {
                return v("termination.goal.pose", "must be finite");
            }
            if !(g.radius.is_finite() && g.radius > 0.0) {
                return v("termination.goal.radius", "must be > 0");
            }
        }

        let mut channels = BTreeSet::new();
        if self.channels.is_empty() {
            return v("channels", "at least one channel is required");
        }
        for c in &self.channels {
            if c.is_empty() {
                return v("channels", "channel ids must not be empty");
            }
            if !channels.insert(c.as_str()) {
                return Err(ValidationError::new("channels", format!("duplicate channel id `{c}`")));
            }
        }

        if self.ego.id.is_empty() {
            return v("ego.id", "must not be empty");
        }
        let mut actor_ids = BTreeSet::from([self.ego.id.as_str()]);
        for a in &self.world.actors {
            let path = format!("world.actors.{}", a.id);
            if a.id.is_empty() {
                return v("world.actors", "actor ids must not be empty");
            }
            if !actor_ids.insert(a.id.as_str()) {
                return Err(ValidationError::new(path, format!("duplicate actor id `{}`", a.id)));
            }
            if a.kind == ActorKind::Ego {
                return Err(ValidationError::new(
                    format!("{path}.kind"),
                    "the ego is declared under `ego`, not in world.actors",
                ));
            }
        }
        if !matches!(self.world.grid, Some(GridSource::File(_))) {
            self.build_world()?;
        }

        let mut sensors = BTreeMap::new();
        for s in &self.sensors {
            let path = format!("sensors.{}", s.id);
            s.validate(&path)?;
            if sensors.insert(s.id.as_str(), s).is_some() {
                return Err(ValidationError::new(path, format!("duplicate sensor id `{}`", s.id)));
            }
            if channels.contains(s.id.as_str()) {
                return Err(ValidationError::new(path, "sensor id collides with a channel id"));
            }
        }

        for (sid, targets) in &self.routing.sensors {
            let path = format!("routing.sensors.{sid}");
            if !sensors.contains_key(sid.as_str()) {
                return Err(ValidationError::new(path, format!("unknown sensor `{sid}`")));
            }
            let mut seen = BTreeSet::new();
            for c in targets {
                if !channels.contains(c.as_str()) {
                    return Err(ValidationError::new(path, format!("unknown channel `{c}`")));
                }
                if !seen.insert(c) {
                    return Err(ValidationError::new(path, format!("channel `{c}` listed twice")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for c in &self.routing.ground_truth {
            if !channels.contains(c.as_str()) {
                return Err(ValidationError::new("routing.ground_truth", format!("unknown channel `{c}`")));
            }
            if !seen.insert(c) {
                return Err(ValidationError::new("routing.ground_truth", format!("channel `{c}` listed twice")));
            }
        }

        self.resolve_faults()?;

        for (i, var) in self.sweep.iter().enumerate() {
            let path = format!("sweep.{i}");
            if var.values.is_empty() {
                return Err(ValidationError::new(format!("{path}.values"), "must not be empty"));
            }
            sweep::check_variable(self, var).map_err(|m| ValidationError::new(path, m))?;
        }

        let a = &self.acceptance;
        if let Some(c) = a.min_clearance {
            if !(c.is_finite() && c >= 0.0) {
                return v("acceptance.min_clearance", "must be finite and >= 0");
            }
        }
        Ok(())
    }

    /// The runtime form of every fault, in declaration order.
    pub fn resolve_faults(&self) -> Result<Vec<Fault>, ValidationError> {
        self.faults
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let path = format!("faults.{i}");
                let target = if let Some(s) = self.sensors.iter().find(|s| s.id == f.target) {
                    TargetRef::Sensor(&s.params)
                } else if self.channels.contains(&f.target) {
                    TargetRef::Channel
                } else {
                    return Err(ValidationError::new(
                        format!("{path}.target"),
                        format!("`{}` is neither a sensor nor a channel", f.target),
                    ));
                };
                f.resolve(&path, target)
            })
            .collect()
    }

    pub fn routing_table(&self) -> RoutingTable {
        RoutingTable {
            routes: self
                .sensors
                .iter()
                .map(|s| {
                    let chans = self.routing.sensors.get(&s.id).cloned().unwrap_or_default();
                    (s.id.clone(), chans.into_iter().collect())
                })
                .collect(),
        }
    }

    pub fn ego_actor(&self) -> Actor {
        Actor {
            id: self.ego.id.clone(),
            kind: ActorKind::Ego,
            state: self.ego.state,
            footprint: self.ego.footprint,
            params: self.ego.params,
            script: Vec::new(),
            next_waypoint: 0,
        }
    }

    /// Instantiates the world: ego first, then the other actors in order.
    pub fn build_world(&self) -> Result<World, ValidationError> {
        let w = &self.world;
        let mut statics = match &w.grid {
            None => Default::default(),
            Some(GridSource::Rows(rows)) => parse_ascii_world(&rows.join("\n"))
                .map_err(|e| ValidationError::new("world.grid", e.to_string()))?,
            Some(GridSource::File(f)) => {
                return Err(ValidationError::new(
                    "world.grid",
                    format!("grid file `{f}` is not resolved; load the scenario from its file"),
                ))
            }
        };
        statics.obstacles.extend(w.obstacles.iter().cloned());
        statics.lanes.extend(w.lanes.iter().cloned());
        match (w.bounds, &w.grid) {
            (Some(b), _) => statics.bounds = b,
            (None, Some(_)) => {}
            (None, None) => return Err(ValidationError::new("world.bounds", "required when no grid is given")),
        }
        let mut actors = vec![self.ego_actor()];
        actors.extend(w.actors.iter().map(|a| Actor {
            id: a.id.clone(),
            kind: a.kind,
            state: a.state,
            footprint: a.footprint(),
            params: a.params,
            script: a.script.clone(),
            next_waypoint: 0,
        }));
        let ego_prefix = format!("actors.{}", self.ego.id);
        World::new(statics, actors, w.environment).map_err(|mut e| {
            if let Some(rest) = e.path.strip_prefix(&ego_prefix) {
                e.path = format!("ego{rest}");
            } else if e.path.starts_with("actors.") {
                e.path = format!("world.{}", e.path);
            }
            e
        })
    }

    /// Number of ticks a run may take.
    pub fn max_ticks(&self) -> u64 {
        (self.termination.max_time / self.dt - 1e-9).ceil() as u64
    }
}
