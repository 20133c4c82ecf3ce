//! Simulated sensors sampled from ground truth, and frame routing to channels.
//!
//! Every sampler is a pure function of the scene, the sensor config and the
//! sensor's own noise stream. Noise variates are drawn whether or not the
//! corresponding σ is zero, so changing a noise level never shifts the stream.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::geom::{normalize_angle, Pose2D, Shape, Vec2};
use crate::rng::NoiseStream;
use crate::world::{ActorKind, ActorSnapshot, BodyRef, BodySet, Scene};

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub id: String,
    /// Mounting pose relative to the ego reference point.
    #[serde(default)]
    pub mount: Pose2D,
    #[serde(default = "one")]
    pub rate_divisor: u64,
    pub params: SensorParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorType {
    Lidar,
    Camera,
    Radar,
    Gps,
    Imu,
    Ultrasonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SensorParams {
    Lidar(LidarParams),
    Camera(CameraParams),
    Radar(RadarParams),
    Gps(GpsParams),
    Imu(ImuParams),
    Ultrasonic(UltrasonicParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarParams {
    pub beams: u32,
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        LidarParams {
            beams: 180,
            fov: 2.0 * PI,
            max_range: 60.0,
            range_noise_sigma: 0.02,
        }
    }
}

impl LidarParams {
    /// Beam angles in the sensor frame. A full circle is split without
    /// repeating the seam; a partial fan includes both edges.
    pub fn beam_angles(&self) -> Vec<f64> {
        let n = self.beams as usize;
        if n == 1 {
            return vec![0.0];
        }
        let full = self.fov >= 2.0 * PI;
        let step = if full { self.fov / n as f64 } else { self.fov / (n - 1) as f64 };
        (0..n).map(|i| -self.fov / 2.0 + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraParams {
    pub fov: f64,
    pub max_range: f64,
    pub base_detection_prob: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        CameraParams {
            fov: 1.2,
            max_range: 60.0,
            base_detection_prob: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarParams {
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub rate_noise_sigma: f64,
    pub base_detection_prob: f64,
}

impl Default for RadarParams {
    fn default() -> Self {
        RadarParams {
            fov: 0.6,
            max_range: 150.0,
            range_noise_sigma: 0.1,
            rate_noise_sigma: 0.05,
            base_detection_prob: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpsParams {
    pub pos_noise_sigma: f64,
}

impl Default for GpsParams {
    fn default() -> Self {
        GpsParams { pos_noise_sigma: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuParams {
    pub accel_noise_sigma: f64,
    pub gyro_noise_sigma: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        ImuParams {
            accel_noise_sigma: 0.02,
            gyro_noise_sigma: 0.002,
            accel_bias: 0.0,
            gyro_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UltrasonicParams {
    pub max_range: f64,
    pub beam_width: f64,
    /// Rays used to sweep the cone.
    pub rays: u32,
}

impl Default for UltrasonicParams {
    fn default() -> Self {
        UltrasonicParams {
            max_range: 5.0,
            beam_width: 0.5,
            rays: 9,
        }
    }
}

impl SensorParams {
    pub fn sensor_type(&self) -> SensorType {
        match self {
            SensorParams::Lidar(_) => SensorType::Lidar,
            SensorParams::Camera(_) => SensorType::Camera,
            SensorParams::Radar(_) => SensorType::Radar,
            SensorParams::Gps(_) => SensorType::Gps,
            SensorParams::Imu(_) => SensorType::Imu,
            SensorParams::Ultrasonic(_) => SensorType::Ultrasonic,
        }
    }

    /// Angular field of view for sensors that have one.
    pub fn fov(&self) -> Option<f64> {
        match self {
            SensorParams::Lidar(p) => Some(p.fov),
            SensorParams::Camera(p) => Some(p.fov),
            SensorParams::Radar(p) => Some(p.fov),
            SensorParams::Ultrasonic(p) => Some(p.beam_width),
            _ => None,
        }
    }
}

impl SensorConfig {
    pub fn sensor_type(&self) -> SensorType {
        self.params.sensor_type()
    }

    pub fn topic(&self) -> String {
        sensor_topic(&self.id)
    }

    pub fn validate(&self, path: &str) -> Result<(), ValidationError> {
        let err = |field: &str, msg: &str| Err(ValidationError::new(format!("{path}.{field}"), msg));
        if self.id.is_empty() {
            return err("id", "must not be empty");
        }
        if !self.mount.is_finite() {
            return err("mount", "must be finite");
        }
        if self.rate_divisor < 1 {
            return err("rate_divisor", "must be >= 1");
        }
        let sigma_ok = |s: f64| s.is_finite() && s >= 0.0;
        let fov_ok = |f: f64| f > 0.0 && f <= 2.0 * PI;
        let range_ok = |r: f64| r.is_finite() && r > 0.0;
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        match &self.params {
            SensorParams::Lidar(p) => {
                if p.beams < 1 {
                    return err("params.beams", "must be >= 1");
                }
                if !fov_ok(p.fov) {
                    return err("params.fov", "must be in (0, 2π]");
                }
                if !range_ok(p.max_range) {
                    return err("params.max_range", "must be > 0");
                }
                if !sigma_ok(p.range_noise_sigma) {
                    return err("params.range_noise_sigma", "must be >= 0");
                }
            }
            SensorParams::Camera(p) => {
                if !fov_ok(p.fov) {
                    return err("params.fov", "must be in (0, 2π]");
                }
                if !range_ok(p.max_range) {
                    return err("params.max_range", "must be > 0");
                }
                if !prob_ok(p.base_detection_prob) {
                    return err("params.base_detection_prob", "must be in [0, 1]");
                }
            }
            SensorParams::Radar(p) => {
                if !fov_ok(p.fov) {
                    return err("params.fov", "must be in (0, 2π]");
                }
                if !range_ok(p.max_range) {
                    return err("params.max_range", "must be > 0");
                }
                if !sigma_ok(p.range_noise_sigma) {
                    return err("params.range_noise_sigma", "must be >= 0");
                }
                if !sigma_ok(p.rate_noise_sigma) {
                    return err("params.rate_noise_sigma", "must be >= 0");
                }
                if !prob_ok(p.base_detection_prob) {
                    return err("params.base_detection_prob", "must be in [0, 1]");
                }
            }
            SensorParams::Gps(p) => {
                if !sigma_ok(p.pos_noise_sigma) {
                    return err("params.pos_noise_sigma", "must be >= 0");
                }
            }
            SensorParams::Imu(p) => {
                if !sigma_ok(p.accel_noise_sigma) {
                    return err("params.accel_noise_sigma", "must be >= 0");
                }
                if !sigma_ok(p.gyro_noise_sigma) {
                    return err("params.gyro_noise_sigma", "must be >= 0");
                }
                if !(p.accel_bias.is_finite() && p.gyro_bias.is_finite()) {
                    return err("params", "biases must be finite");
                }
            }
            SensorParams::Ultrasonic(p) => {
                if !range_ok(p.max_range) {
                    return err("params.max_range", "must be > 0");
                }
                if !fov_ok(p.beam_width) {
                    return err("params.beam_width", "must be in (0, 2π]");
                }
                if p.rays < 1 {
                    return err("params.rays", "must be >= 1");
                }
            }
        }
        Ok(())
    }
}

pub fn sensor_topic(id: &str) -> String {
    format!("sensor/{id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    /// Object centre in the sensor frame.
    pub position: Vec2,
    /// Object heading relative to the sensor.
    pub heading: f64,
    /// Length and width of the object's bounding box.
    pub extent: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_rate: Option<f64>,
}

impl Detection {
    pub fn bearing(&self) -> f64 {
        self.position.angle()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FramePayload {
    LidarScan {
        angles: Vec<f64>,
        /// `None` means no return.
        ranges: Vec<Option<f64>>,
    },
    ObjectList {
        detections: Vec<Detection>,
    },
    GpsFix {
        x: f64,
        y: f64,
    },
    ImuSample {
        accel: f64,
        yaw_rate: f64,
    },
    UltrasonicRange {
        range: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub sensor_id: String,
    /// Tick at which the frame was sampled.
    pub tick: u64,
    pub payload: FramePayload,
}

/// Per-tick geometry shared by every sensor sample.
pub struct SensorContext<'a> {
    pub scene: &'a Scene,
    pub ego: &'a ActorSnapshot,
    /// Every body except the ego.
    pub bodies: BodySet,
}

impl<'a> SensorContext<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        let ego = scene.ego();
        SensorContext {
            scene,
            ego,
            bodies: scene.bodies(Some(&ego.id)),
        }
    }

    pub fn sensor_pose(&self, mount: &Pose2D) -> Pose2D {
        self.ego.state.pose.compose(mount)
    }

    /// Candidate objects for list-producing sensors: obstacles then non-ego actors.
    fn objects(&self) -> Vec<ObjectTruth> {
        let mut out = Vec::new();
        for o in &self.scene.statics.obstacles {
            let b = o.shape.bounds();
            out.push(ObjectTruth {
                body: BodyRef::Obstacle(o.id.clone()),
                center: o.shape.centroid(),
                heading: 0.0,
                extent: match &o.shape {
                    Shape::Circle { radius, .. } => [2.0 * radius, 2.0 * radius],
                    Shape::Polygon { .. } => [b.width(), b.height()],
                },
                velocity: Vec2::ZERO,
            });
        }
        for a in &self.scene.actors {
            if a.kind == ActorKind::Ego {
                continue;
            }
            out.push(ObjectTruth {
                body: BodyRef::Actor(a.id.clone()),
                center: a.state.pose.position(),
                heading: a.state.pose.heading,
                extent: [a.footprint.length, a.footprint.width],
                velocity: a.state.velocity(),
            });
        }
        out
    }

    /// Objects whose centre is inside the cone and directly visible from `sensor`.
    fn visible_objects(&self, sensor: &Pose2D, fov: f64, max_range: f64) -> Vec<(ObjectTruth, Vec2)> {
        let origin = sensor.position();
        self.objects()
            .into_iter()
            .filter_map(|obj| {
                let rel = sensor.to_local(obj.center);
                let range = rel.norm();
                if range <= 0.0 || range > max_range {
                    return None;
                }
                if fov < 2.0 * PI && rel.angle().abs() > fov / 2.0 {
                    return None;
                }
                let world_angle = (obj.center - origin).angle();
                let hit = self.bodies.ray_cast(origin, world_angle, range)?;
                (hit.target == obj.body).then_some((obj, rel))
            })
            .collect()
    }
}

struct ObjectTruth {
    body: BodyRef,
    center: Vec2,
    heading: f64,
    extent: [f64; 2],
    velocity: Vec2,
}

/// Samples one frame. `noise_scale` multiplies every σ of the sensor.
pub fn sample(
    cfg: &SensorConfig,
    ctx: &SensorContext<'_>,
    noise_scale: f64,
    rng: &mut NoiseStream,
) -> SensorFrame {
    let payload = match &cfg.params {
        SensorParams::Lidar(p) => sample_lidar(ctx, &cfg.mount, p, noise_scale, rng),
        SensorParams::Camera(p) => sample_camera(ctx, &cfg.mount, p, rng),
        SensorParams::Radar(p) => sample_radar(ctx, &cfg.mount, p, noise_scale, rng),
        SensorParams::Gps(p) => sample_gps(ctx, &cfg.mount, p, noise_scale, rng),
        SensorParams::Imu(p) => sample_imu(ctx, p, noise_scale, rng),
        SensorParams::Ultrasonic(p) => sample_ultrasonic(ctx, &cfg.mount, p),
    };
    SensorFrame {
        sensor_id: cfg.id.clone(),
        tick: ctx.scene.tick,
        payload,
    }
}

pub fn sample_lidar(
    ctx: &SensorContext<'_>,
    mount: &Pose2D,
    p: &LidarParams,
    noise_scale: f64,
    rng: &mut NoiseStream,
) -> FramePayload {
    let sensor = ctx.sensor_pose(mount);
    let origin = sensor.position();
    let reach = p.max_range * ctx.scene.environment.visibility;
    let sigma = p.range_noise_sigma * noise_scale;
    let angles = p.beam_angles();
    let ranges = angles
        .iter()
        .map(|a| {
            let hit = ctx.bodies.ray_cast(origin, sensor.heading + a, reach);
            let noise = rng.gaussian(sigma);
            hit.map(|h| (h.distance + noise).max(0.0))
        })
        .collect();
    FramePayload::LidarScan { angles, ranges }
}

pub fn sample_camera(
    ctx: &SensorContext<'_>,
    mount: &Pose2D,
    p: &CameraParams,
    rng: &mut NoiseStream,
) -> FramePayload {
    let sensor = ctx.sensor_pose(mount);
    let env = &ctx.scene.environment;
    let prob = p.base_detection_prob * env.visibility * env.light;
    let detections = ctx
        .visible_objects(&sensor, p.fov, p.max_range)
        .into_iter()
        .filter(|_| rng.bernoulli(prob))
        .map(|(obj, rel)| Detection {
            position: rel,
            heading: normalize_angle(obj.heading - sensor.heading),
            extent: obj.extent,
            range_rate: None,
        })
        .collect();
    FramePayload::ObjectList { detections }
}

/// Velocity of the sensor point given the ego's speed and yaw rate.
fn sensor_velocity(ctx: &SensorContext<'_>, sensor: &Pose2D) -> Vec2 {
    let st = &ctx.ego.state;
    let lever = sensor.position() - st.pose.position();
    st.velocity() + lever.perp() * st.yaw_rate
}

/// Rate of change of the distance between the sensor and a target.
pub fn range_rate(sensor_pos: Vec2, sensor_vel: Vec2, target_pos: Vec2, target_vel: Vec2) -> f64 {
    let los = target_pos - sensor_pos;
    los.dot(target_vel - sensor_vel) / los.norm()
}

pub fn sample_radar(
    ctx: &SensorContext<'_>,
    mount: &Pose2D,
    p: &RadarParams,
    noise_scale: f64,
    rng: &mut NoiseStream,
) -> FramePayload {
    let sensor = ctx.sensor_pose(mount);
    let v_sensor = sensor_velocity(ctx, &sensor);
    let mut detections = Vec::new();
    for (obj, rel) in ctx.visible_objects(&sensor, p.fov, p.max_range) {
        if !rng.bernoulli(p.base_detection_prob) {
            continue;
        }
        let range = rel.norm();
        let noisy_range = (range + rng.gaussian(p.range_noise_sigma * noise_scale)).max(0.0);
        let rate = range_rate(sensor.position(), v_sensor, obj.center, obj.velocity)
            + rng.gaussian(p.rate_noise_sigma * noise_scale);
        detections.push(Detection {
            position: rel * (noisy_range / range),
            heading: normalize_angle(obj.heading - sensor.heading),
            extent: obj.extent,
            range_rate: Some(rate),
        });
    }
    FramePayload::ObjectList { detections }
}

pub fn sample_gps(
    ctx: &SensorContext<'_>,
    mount: &Pose2D,
    p: &GpsParams,
    noise_scale: f64,
    rng: &mut NoiseStream,
) -> FramePayload {
    let pos = ctx.sensor_pose(mount).position();
    let sigma = p.pos_noise_sigma * noise_scale;
    let x = pos.x + rng.gaussian(sigma);
    let y = pos.y + rng.gaussian(sigma);
    FramePayload::GpsFix { x, y }
}

pub fn sample_imu(
    ctx: &SensorContext<'_>,
    p: &ImuParams,
    noise_scale: f64,
    rng: &mut NoiseStream,
) -> FramePayload {
    let st = &ctx.ego.state;
    let accel = st.accel + p.accel_bias + rng.gaussian(p.accel_noise_sigma * noise_scale);
    let yaw_rate = st.yaw_rate + p.gyro_bias + rng.gaussian(p.gyro_noise_sigma * noise_scale);
    FramePayload::ImuSample { accel, yaw_rate }
}

pub fn sample_ultrasonic(ctx: &SensorContext<'_>, mount: &Pose2D, p: &UltrasonicParams) -> FramePayload {
    let sensor = ctx.sensor_pose(mount);
    let n = p.rays as usize;
    let range = (0..n)
        .filter_map(|i| {
            let a = if n == 1 {
                0.0
            } else {
                -p.beam_width / 2.0 + i as f64 * p.beam_width / (n - 1) as f64
            };
            ctx.bodies.ray_cast(sensor.position(), sensor.heading + a, p.max_range)
        })
        .map(|h| h.distance)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
    FramePayload::UltrasonicRange { range }
}

/// Sensor id → channel ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutingTable {
    pub routes: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("frame from undeclared sensor `{0}`")]
pub struct UndeclaredSensor(pub String);

impl RoutingTable {
    pub fn channels_for(&self, sensor_id: &str) -> impl Iterator<Item = &String> {
        self.routes.get(sensor_id).into_iter().flatten()
    }
}

/// Splits frames by destination channel. Frames routed to several channels are
/// shared, not copied. Sensors listed with no channels are accepted and dropped.
pub fn route(
    frames: &[Arc<SensorFrame>],
    table: &RoutingTable,
) -> Result<BTreeMap<String, Vec<Arc<SensorFrame>>>, UndeclaredSensor> {
    let mut out: BTreeMap<String, Vec<Arc<SensorFrame>>> = BTreeMap::new();
    for f in frames {
        let Some(channels) = table.routes.get(&f.sensor_id) else {
            return Err(UndeclaredSensor(f.sensor_id.clone()));
        };
        for ch in channels {
            out.entry(ch.clone()).or_default().push(Arc::clone(f));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::world::{ActorState, Environment, Footprint, ObstacleKind, StaticObstacle, StaticWorld};

    fn scene_with(obstacles: Vec<StaticObstacle>, others: Vec<ActorSnapshot>, ego_state: ActorState) -> Scene {
        let mut actors = vec![ActorSnapshot {
            id: "ego".into(),
            kind: ActorKind::Ego,
            state: ego_state,
            footprint: Footprint::CAR,
        }];
        actors.extend(others);
        Scene {
            tick: 0,
            time: 0.0,
            actors,
            environment: Environment::default(),
            statics: Arc::new(StaticWorld {
                obstacles,
                lanes: vec![],
                bounds: Aabb::new(Vec2::new(-200.0, -200.0), Vec2::new(200.0, 200.0)),
            }),
        }
    }

    fn circle(id: &str, x: f64, y: f64, r: f64) -> StaticObstacle {
        StaticObstacle {
            id: id.into(),
            shape: Shape::Circle { center: Vec2::new(x, y), radius: r },
            kind: ObstacleKind::Tree,
        }
    }

    fn noiseless_lidar(beams: u32) -> LidarParams {
        LidarParams {
            beams,
            fov: 2.0 * PI,
            max_range: 50.0,
            range_noise_sigma: 0.0,
        }
    }

    #[test]
    fn lidar_empty_world_has_no_returns() {
        let s = scene_with(vec![], vec![], ActorState::default());
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let FramePayload::LidarScan { ranges, .. } =
            sample_lidar(&ctx, &Pose2D::default(), &noiseless_lidar(36), 1.0, &mut rng)
        else {
            panic!()
        };
        assert!(ranges.iter().all(Option::is_none));
    }

    #[test]
    fn lidar_forward_beam_hits_circle_front() {
        let s = scene_with(vec![circle("c", 5.0, 0.0, 1.0)], vec![], ActorState::default());
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let FramePayload::LidarScan { angles, ranges } =
            sample_lidar(&ctx, &Pose2D::default(), &noiseless_lidar(36), 1.0, &mut rng)
        else {
            panic!()
        };
        let fwd = angles.iter().position(|a| *a == 0.0).unwrap();
        assert_eq!(ranges[fwd], Some(4.0));
    }

    #[test]
    fn lidar_occluded_surface_is_not_returned() {
        let s = scene_with(
            vec![circle("near", 5.0, 0.0, 1.0), circle("far", 9.0, 0.0, 2.0)],
            vec![],
            ActorState::default(),
        );
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let FramePayload::LidarScan { angles, ranges } =
            sample_lidar(&ctx, &Pose2D::default(), &noiseless_lidar(360), 1.0, &mut rng)
        else {
            panic!()
        };
        for (a, r) in angles.iter().zip(&ranges) {
            if a.abs() < 0.19 {
                // Every beam whose line passes through the near circle stops there.
                assert!(r.unwrap() < 6.0, "beam {a} reached {r:?}");
            }
        }
    }

    #[test]
    fn lidar_visibility_shortens_reach() {
        let mut s = scene_with(vec![circle("c", 40.0, 0.0, 1.0)], vec![], ActorState::default());
        s.environment.visibility = 0.5;
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let FramePayload::LidarScan { ranges, .. } =
            sample_lidar(&ctx, &Pose2D::default(), &noiseless_lidar(4), 1.0, &mut rng)
        else {
            panic!()
        };
        assert!(ranges.iter().all(Option::is_none));
    }

    fn certain_camera(fov: f64) -> CameraParams {
        CameraParams {
            fov,
            max_range: 50.0,
            base_detection_prob: 1.0,
        }
    }

    #[test]
    fn camera_detects_clear_object_ahead() {
        let s = scene_with(vec![circle("c", 10.0, 0.0, 1.0)], vec![], ActorState::default());
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        for _ in 0..100 {
            let FramePayload::ObjectList { detections } =
                sample_camera(&ctx, &Pose2D::default(), &certain_camera(1.0), &mut rng)
            else {
                panic!()
            };
            assert_eq!(detections.len(), 1);
            assert_eq!(detections[0].position, Vec2::new(10.0, 0.0));
            assert_eq!(detections[0].extent, [2.0, 2.0]);
        }
    }

    #[test]
    fn camera_ignores_objects_outside_cone_or_occluded() {
        let s = scene_with(
            vec![circle("side", 0.0, 10.0, 1.0), circle("front", 5.0, 0.0, 1.0), circle("hidden", 12.0, 0.0, 0.5)],
            vec![],
            ActorState::default(),
        );
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let FramePayload::ObjectList { detections } =
            sample_camera(&ctx, &Pose2D::default(), &certain_camera(1.0), &mut rng)
        else {
            panic!()
        };
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].position, Vec2::new(5.0, 0.0));
    }

    #[test]
    fn radar_static_scene_has_zero_range_rate() {
        let s = scene_with(vec![circle("c", 20.0, 3.0, 1.0)], vec![], ActorState::default());
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let p = RadarParams {
            fov: 1.0,
            range_noise_sigma: 0.0,
            rate_noise_sigma: 0.0,
            base_detection_prob: 1.0,
            ..Default::default()
        };
        let FramePayload::ObjectList { detections } = sample_radar(&ctx, &Pose2D::default(), &p, 1.0, &mut rng) else {
            panic!()
        };
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].range_rate, Some(0.0));
    }

    #[test]
    fn radar_receding_target_on_boresight() {
        let target = ActorSnapshot {
            id: "lead".into(),
            kind: ActorKind::Vehicle,
            state: ActorState::at(Pose2D::new(30.0, 0.0, 0.0), 5.0),
            footprint: Footprint::CAR,
        };
        let s = scene_with(vec![], vec![target], ActorState::default());
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        let p = RadarParams {
            range_noise_sigma: 0.0,
            rate_noise_sigma: 0.0,
            base_detection_prob: 1.0,
            ..Default::default()
        };
        let FramePayload::ObjectList { detections } = sample_radar(&ctx, &Pose2D::default(), &p, 1.0, &mut rng) else {
            panic!()
        };
        assert_eq!(detections[0].range_rate, Some(5.0));
    }

    #[test]
    fn noiseless_gps_and_imu_equal_truth() {
        let mut st = ActorState::at(Pose2D::new(3.5, -2.0, 0.4), 7.0);
        st.accel = -1.25;
        st.yaw_rate = 0.125;
        let s = scene_with(vec![], vec![], st);
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(9);
        let gps = sample_gps(&ctx, &Pose2D::default(), &GpsParams { pos_noise_sigma: 0.0 }, 1.0, &mut rng);
        assert_eq!(gps, FramePayload::GpsFix { x: 3.5, y: -2.0 });
        let imu = ImuParams {
            accel_noise_sigma: 0.0,
            gyro_noise_sigma: 0.0,
            accel_bias: 0.0,
            gyro_bias: 0.0,
        };
        assert_eq!(
            sample_imu(&ctx, &imu, 1.0, &mut rng),
            FramePayload::ImuSample { accel: -1.25, yaw_rate: 0.125 }
        );
    }

    #[test]
    fn ultrasonic_reports_near_wall() {
        let wall = StaticObstacle {
            id: "wall".into(),
            shape: Shape::rect(Vec2::new(0.4, -2.0), Vec2::new(1.0, 2.0)),
            kind: ObstacleKind::Barrier,
        };
        let s = scene_with(vec![wall], vec![], ActorState::default());
        let ctx = SensorContext::new(&s);
        let r = sample_ultrasonic(&ctx, &Pose2D::default(), &UltrasonicParams::default());
        let FramePayload::UltrasonicRange { range: Some(r) } = r else { panic!() };
        assert!((r - 0.4).abs() < 1e-12);
        let far = sample_ultrasonic(&ctx, &Pose2D::new(0.0, 0.0, PI), &UltrasonicParams::default());
        assert_eq!(far, FramePayload::UltrasonicRange { range: None });
    }

    #[test]
    fn frames_carry_their_sensor_id() {
        let s = scene_with(vec![], vec![], ActorState::default());
        let ctx = SensorContext::new(&s);
        let mut rng = NoiseStream::from_seed(1);
        for id in ["gps_a", "gps_b"] {
            let cfg = SensorConfig {
                id: id.into(),
                mount: Pose2D::default(),
                rate_divisor: 1,
                params: SensorParams::Gps(GpsParams::default()),
            };
            assert_eq!(sample(&cfg, &ctx, 1.0, &mut rng).sensor_id, id);
        }
    }

    fn frame(id: &str) -> Arc<SensorFrame> {
        Arc::new(SensorFrame {
            sensor_id: id.into(),
            tick: 0,
            payload: FramePayload::GpsFix { x: 0.0, y: 0.0 },
        })
    }

    #[test]
    fn routing_delivers_only_mapped_frames() {
        let mut table = RoutingTable::default();
        table.routes.insert("lidar1".into(), ["nominal".to_string()].into());
        let out = route(&[frame("lidar1")], &table).unwrap();
        assert!(!out.contains_key("safety"));
        assert_eq!(out["nominal"].len(), 1);

        assert!(route(&[], &RoutingTable::default()).unwrap().is_empty());
        assert_eq!(
            route(&[frame("ghost")], &table).unwrap_err(),
            UndeclaredSensor("ghost".into())
        );
    }

    #[test]
    fn shared_routes_deliver_the_same_object() {
        let mut table = RoutingTable::default();
        table
            .routes
            .insert("gps".into(), ["nominal".to_string(), "safety".to_string()].into());
        let out = route(&[frame("gps")], &table).unwrap();
        assert!(Arc::ptr_eq(&out["nominal"][0], &out["safety"][0]));
    }

    #[test]
    fn params_reject_unknown_keys_and_fill_defaults() {
        let cfg: SensorConfig =
            serde_json::from_str(r#"{"id":"l","params":{"type":"lidar","beams":4}}"#).unwrap();
        assert_eq!(cfg.rate_divisor, 1);
        let SensorParams::Lidar(p) = &cfg.params else { panic!() };
        assert_eq!(p.beams, 4);
        assert_eq!(p.max_range, LidarParams::default().max_range);
        let bad = serde_json::from_str::<SensorConfig>(r#"{"id":"l","params":{"type":"lidar","beamz":4}}"#);
        assert!(bad.unwrap_err().to_string().contains("unknown field"));
    }
}
