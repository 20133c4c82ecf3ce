//! The nominal driving channel: map, localize, cluster, plan, track. It sees
//! only routed sensor frames and the map artifacts.

mod cluster;
mod localize;
mod map;
mod plan;
mod track;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use cluster::{cluster, Cluster, ClusterConfig, SpatialHash};
pub use localize::{localize, Estimate, ImuInput, LocalizationConfig};
pub use map::{
    build_map, load_map, map_paths, sample_boundary, save_map, LaneEntry, LaneMap, MapError, PointMap,
    DEFAULT_MAP_SPACING, MAP_FORMAT_VERSION,
};
pub use plan::{
    generate_candidates, mean_curvature, offsets, score, select, trajectory_clearance, CandidateTrajectory, Path,
    PlannerConfig,
};
pub use track::{pure_pursuit, speed_accel, TrackingConfig};

use crate::command::Actuation;
use crate::geom::{normalize_angle, Pose2D, Vec2};
use crate::kernel::{Channel, ChannelError, ChannelEvent, ChannelInput, ChannelOutput, MetricEvent};
use crate::scenario::Goal;
use crate::sensors::FramePayload;

pub const PLAN_METRIC: &str = "nominal.plan";
pub const DEGRADED_METRIC: &str = "nominal.degraded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NominalConfig {
    pub id: String,
    pub priority: i32,
    /// Point-map artifact; built in memory from the scenario when absent.
    pub point_map: Option<String>,
    /// Lane-map artifact; built in memory from the scenario when absent.
    pub lane_map: Option<String>,
    pub map_spacing: f64,
    pub localization: LocalizationConfig,
    pub clustering: ClusterConfig,
    pub planner: PlannerConfig,
    pub tracking: TrackingConfig,
}

impl Default for NominalConfig {
    fn default() -> Self {
        NominalConfig {
            id: "nominal".into(),
            priority: 1,
            point_map: None,
            lane_map: None,
            map_spacing: DEFAULT_MAP_SPACING,
            localization: LocalizationConfig::default(),
            clustering: ClusterConfig::default(),
            planner: PlannerConfig::default(),
            tracking: TrackingConfig::default(),
        }
    }
}

impl NominalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("nominal.id must be non-empty".into());
        }
        if self.point_map.is_some() != self.lane_map.is_some() {
            return Err("nominal.point_map and nominal.lane_map must be given together".into());
        }
        let l = &self.localization;
        if !(0.0..=1.0).contains(&l.alpha) {
            return Err("nominal.localization.alpha must be in [0, 1]".into());
        }
        let c = &self.clustering;
        let p = &self.planner;
        let t = &self.tracking;
        for (name, v) in [
            ("map_spacing", self.map_spacing),
            ("clustering.d_c", c.d_c),
            ("clustering.map_margin", c.map_margin),
            ("planner.horizon", p.horizon),
            ("planner.step", p.step),
            ("planner.min_speed", p.min_speed),
            ("planner.clear_cap", p.clear_cap),
            ("tracking.lookahead_min", t.lookahead_min),
            ("tracking.comfort_accel", t.comfort_accel),
            ("tracking.brake_accel", t.brake_accel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("nominal.{name} must be finite and > 0"));
            }
        }
        for (name, v) in [
            ("planner.lateral_margin", p.lateral_margin),
            ("planner.w_clear", p.w_clear),
            ("planner.w_off", p.w_off),
            ("planner.w_smooth", p.w_smooth),
            ("planner.d_collide", p.d_collide),
            ("tracking.lookahead_gain", t.lookahead_gain),
            ("tracking.speed_gain", t.speed_gain),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("nominal.{name} must be finite and >= 0"));
            }
        }
        if p.k == 0 {
            return Err("nominal.planner.k must be >= 1".into());
        }
        if t.cruise_speed.is_some_and(|v| !(v.is_finite() && v >= 0.0)) {
            return Err("nominal.tracking.cruise_speed must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// What the channel knows about its vehicle before the run starts.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalSetup {
    pub initial: Estimate,
    pub wheelbase: f64,
    pub half_width: f64,
    /// Sensor mounts by sensor id.
    pub mounts: BTreeMap<String, Pose2D>,
    pub goal: Option<Goal>,
}

struct LaneGeom {
    forward: Path,
    backward: Path,
}

pub struct NominalChannel {
    cfg: NominalConfig,
    setup: NominalSetup,
    lanes: LaneMap,
    geoms: Vec<Option<LaneGeom>>,
    map_index: Option<SpatialHash>,
    estimate: Estimate,
    started: bool,
    starved: u64,
    clusters: Vec<Cluster>,
    lane: Option<(usize, bool)>,
    steps: u64,
}

impl NominalChannel {
    pub fn new(cfg: NominalConfig, setup: NominalSetup, points: PointMap, lanes: LaneMap) -> Self {
        let geoms = lanes
            .lanes
            .iter()
            .map(|l| {
                Path::new(&l.centerline).map(|forward| LaneGeom {
                    backward: forward.reversed(),
                    forward,
                })
            })
            .collect();
        let map_index = (!points.points.is_empty()).then(|| SpatialHash::new(&points.points, cfg.clustering.map_margin));
        NominalChannel {
            estimate: setup.initial,
            cfg,
            setup,
            lanes,
            geoms,
            map_index,
            started: false,
            starved: 0,
            clusters: Vec::new(),
            lane: None,
            steps: 0,
        }
    }

    pub fn estimate(&self) -> Estimate {
        self.estimate
    }

    fn path(&self, lane: (usize, bool)) -> &Path {
        let g = self.geoms[lane.0].as_ref().expect("selected lanes have geometry");
        if lane.1 {
            &g.backward
        } else {
            &g.forward
        }
    }

    /// Keeps the current lane while it is within capture distance; otherwise
    /// picks the captured lane and direction best aligned with the heading.
    fn choose_lane(&mut self) -> Option<(usize, bool)> {
        let pos = self.estimate.pose.position();
        let captured = |i: usize, g: &LaneGeom| g.forward.distance(pos) < self.lanes.lanes[i].width;
        if let Some(cur) = self.lane {
            if self.geoms[cur.0].as_ref().is_some_and(|g| captured(cur.0, g)) {
                return Some(cur);
            }
        }
        let mut best: Option<(f64, f64, (usize, bool))> = None;
        for (i, g) in self.geoms.iter().enumerate() {
            let Some(g) = g else { continue };
            if !captured(i, g) {
                continue;
            }
            let dist = g.forward.distance(pos);
            for (rev, path) in [(false, &g.forward), (true, &g.backward)] {
                let (s, _) = path.project(pos);
                let mis = normalize_angle(path.tangent(s).angle() - self.estimate.pose.heading).abs();
                if best.is_none_or(|b| mis < b.0 - 1e-9 || (mis <= b.0 + 1e-9 && dist < b.1)) {
                    best = Some((mis, dist, (i, rev)));
                }
            }
        }
        best.map(|b| b.2)
    }

    fn target_speed(&self, lane: usize) -> f64 {
        let limit = self
            .cfg
            .tracking
            .cruise_speed
            .unwrap_or(self.lanes.lanes[lane].speed_limit);
        match &self.setup.goal {
            Some(g) => {
                let d = self.estimate.pose.position().dist(g.pose.position()) - g.radius / 2.0;
                limit.min((2.0 * self.cfg.tracking.comfort_accel * d.max(0.0)).sqrt())
            }
            None => limit,
        }
    }

    fn scan_points(&self, sensor: &str, angles: &[f64], ranges: &[Option<f64>]) -> Vec<Vec2> {
        let mount = self.setup.mounts.get(sensor).copied().unwrap_or_default();
        let sp = self.estimate.pose.compose(&mount);
        angles
            .iter()
            .zip(ranges)
            .filter_map(|(a, r)| r.map(|r| sp.position() + Vec2::from_angle(sp.heading + a) * r))
            .filter(|p| p.is_finite())
            .collect()
    }
}

impl Channel for NominalChannel {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn priority(&self) -> i32 {
        self.cfg.priority
    }

    fn step(&mut self, input: &ChannelInput<'_>) -> Result<ChannelOutput, ChannelError> {
        let mut gps = None;
        let mut imu = None;
        let mut scan = None;
        for f in input.sensor_frames() {
            match &f.payload {
                FramePayload::GpsFix { x, y } => gps = Some((f.sensor_id.as_str(), Vec2::new(*x, *y))),
                FramePayload::ImuSample { accel, yaw_rate } => {
                    imu = Some(ImuInput {
                        accel: *accel,
                        yaw_rate: *yaw_rate,
                    })
                }
                FramePayload::LidarScan { angles, ranges } => scan = Some((f.sensor_id.as_str(), angles, ranges)),
                _ => {}
            }
        }
        self.steps += 1;
        let mut out = ChannelOutput {
            heartbeat: Some(self.steps),
            ..Default::default()
        };

        if gps.is_none() && imu.is_none() {
            self.starved += 1;
        } else {
            self.starved = 0;
        }
        let dt = if self.started { input.dt } else { 0.0 };
        self.started = true;
        // Heading for the antenna lever arm comes from the IMU-propagated estimate.
        let heading = self.estimate.pose.heading + imu.map_or(0.0, |m| m.yaw_rate * dt);
        let gps_ref = gps.map(|(id, p)| {
            let mount = self.setup.mounts.get(id).copied().unwrap_or_default();
            p - mount.position().rotate(heading)
        });
        self.estimate = localize(&self.estimate, gps_ref, imu, dt, self.cfg.localization.alpha);
        if !(self.estimate.pose.is_finite() && self.estimate.speed.is_finite()) {
            return Err(ChannelError("localization diverged".into()));
        }

        if self.starved > self.cfg.localization.dropout_tolerance {
            out.events.push(ChannelEvent::Metric(MetricEvent {
                name: DEGRADED_METRIC.into(),
                data: json!({ "ticks_without_input": self.starved }),
            }));
            return Ok(out);
        }

        let scanned = scan.is_some();
        if let Some((id, angles, ranges)) = scan {
            let pts = self.scan_points(id, angles, ranges);
            self.clusters = cluster(&pts, self.map_index.as_ref(), &self.cfg.clustering);
        }

        self.lane = self.choose_lane();
        let mut candidates = Vec::new();
        let mut selected = None;
        if let Some(lane) = self.lane {
            let width = self.lanes.lanes[lane.0].width;
            candidates = generate_candidates(self.path(lane), width, &self.estimate, &self.cfg.planner);
            for c in &mut candidates {
                score(c, &self.clusters, self.setup.half_width, &self.cfg.planner);
            }
            selected = select(&candidates);
        }
        let command = match (self.lane, selected) {
            (Some(lane), Some(i)) => {
                let t = &self.cfg.tracking;
                let steer = pure_pursuit(
                    &self.estimate,
                    &candidates[i].points,
                    self.setup.wheelbase,
                    t.lookahead(self.estimate.speed),
                );
                let accel = speed_accel(self.estimate.speed, self.target_speed(lane.0), t);
                Actuation { accel, steer }
            }
            _ => Actuation {
                accel: -self.cfg.tracking.brake_accel,
                steer: 0.0,
            },
        };
        out.command = Some(command);
        // Clusters only change on scan ticks; in between they are carried over.
        let clusters = scanned.then_some(&self.clusters);
        out.events.push(ChannelEvent::Metric(MetricEvent {
            name: PLAN_METRIC.into(),
            data: json!({
                "estimate": self.estimate,
                "lane": self.lane.map(|(i, _)| self.lanes.lanes[i].id.clone()),
                "reversed": self.lane.map(|(_, r)| r),
                "clusters": clusters,
                "candidates": candidates.iter().map(|c| json!({
                    "offset": c.lateral_offset,
                    "cost": c.cost,
                    "clearance": c.clearance,
                    "colliding": c.colliding,
                    "mean_curvature": c.mean_curvature,
                })).collect::<Vec<_>>(),
                "selected": selected.map(|i| candidates[i].lateral_offset),
                "command": command,
            }),
        }));
        Ok(out)
    }
}
