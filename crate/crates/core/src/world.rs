//! The planar world: static obstacles, lanes, environment and actor kinematics.
//!
//! Everything here is value-semantics. Stepping an actor returns a new actor,
//! and a [`Scene`] is a cheap snapshot that shares the static part of the world.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::geom::{fm, normalize_angle, Aabb, Pose2D, Shape, Vec2};

pub const GRAVITY: f64 = 9.81;

/// Comfort acceleration used by scripted actors when regulating speed.
const SCRIPT_ACCEL_LIMIT: f64 = 3.0;
const SCRIPT_SPEED_GAIN: f64 = 1.0;
const PEDESTRIAN_HEADING_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Building,
    Tree,
    Barrier,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticObstacle {
    pub id: String,
    pub shape: Shape,
    #[serde(default)]
    pub kind: ObstacleKind,
}

fn default_speed_limit() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub centerline: Vec<Vec2>,
    pub width: f64,
    #[serde(default)]
    pub successors: Vec<String>,
    /// Target cruising speed along this lane, m/s.
    #[serde(default = "default_speed_limit")]
    pub speed_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Ego,
    Vehicle,
    Pedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorState {
    pub pose: Pose2D,
    pub speed: f64,
    /// Realized longitudinal acceleration over the last step.
    #[serde(default)]
    pub accel: f64,
    #[serde(default)]
    pub steer: f64,
    /// Realized yaw rate over the last step.
    #[serde(default)]
    pub yaw_rate: f64,
}

impl ActorState {
    pub fn at(pose: Pose2D, speed: f64) -> Self {
        ActorState {
            pose,
            speed,
            ..Default::default()
        }
    }

    pub fn velocity(&self) -> Vec2 {
        self.pose.direction() * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub const CAR: Footprint = Footprint {
        length: 4.5,
        width: 1.8,
    };
    pub const PEDESTRIAN: Footprint = Footprint {
        length: 0.5,
        width: 0.5,
    };

    pub fn shape_at(&self, pose: &Pose2D) -> Shape {
        Shape::oriented_rect(pose, self.length, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Steering limit in radians. For pedestrians this bounds the commanded yaw rate in rad/s.
    pub steer_max: f64,
    pub capture_radius: f64,
    /// Hard actuation limit applied to any command, m/s².
    pub accel_limit: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.7,
            steer_max: 0.6,
            capture_radius: 2.0,
            accel_limit: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Target speed while approaching this waypoint.
    pub speed: f64,
}

impl Waypoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: String,
    pub kind: ActorKind,
    pub state: ActorState,
    pub footprint: Footprint,
    pub params: VehicleParams,
    pub script: Vec<Waypoint>,
    /// Index of the waypoint currently pursued; `script.len()` once all are consumed.
    pub next_waypoint: usize,
}

impl Actor {
    pub fn shape(&self) -> Shape {
        self.footprint.shape_at(&self.state.pose)
    }

    pub fn snapshot(&self) -> ActorSnapshot {
        ActorSnapshot {
            id: self.id.clone(),
            kind: self.kind,
            state: self.state,
            footprint: self.footprint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Environment {
    /// Road friction coefficient μ ∈ (0, 1.5].
    pub friction: f64,
    pub visibility: f64,
    pub light: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            friction: 1.0,
            visibility: 1.0,
            light: 1.0,
        }
    }
}

impl Environment {
    pub fn max_accel(&self) -> f64 {
        self.friction * GRAVITY
    }

    pub fn validate(&self, path: &str) -> Result<(), ValidationError> {
        if !(self.friction > 0.0 && self.friction <= 1.5) {
            return Err(ValidationError::new(format!("{path}.friction"), "must be in (0, 1.5]"));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(ValidationError::new(format!("{path}.visibility"), "must be in (0, 1]"));
        }
        if !(self.light > 0.0 && self.light <= 1.0) {
            return Err(ValidationError::new(format!("{path}.light"), "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// The part of the world that never changes during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticWorld {
    pub obstacles: Vec<StaticObstacle>,
    pub lanes: Vec<Lane>,
    pub bounds: Aabb,
}

impl Default for StaticWorld {
    fn default() -> Self {
        StaticWorld {
            obstacles: Vec::new(),
            lanes: Vec::new(),
            bounds: Aabb::new(Vec2::ZERO, Vec2::ZERO),
        }
    }
}

/// Identifies the body a query hit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyRef {
    Obstacle(String),
    Actor(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub target: BodyRef,
}

/// Precomputed outlines of every body in a world or scene, optionally minus one actor.
#[derive(Debug, Clone)]
pub struct BodySet {
    bodies: Vec<(BodyRef, Shape, Aabb)>,
}

impl BodySet {
    pub fn new<'a>(
        statics: &StaticWorld,
        actors: impl IntoIterator<Item = (&'a str, Shape)>,
        exclude: Option<&str>,
    ) -> Self {
        let mut bodies = Vec::new();
        for o in &statics.obstacles {
            bodies.push((BodyRef::Obstacle(o.id.clone()), o.shape.clone(), o.shape.bounds()));
        }
        for (id, shape) in actors {
            if Some(id) == exclude {
                continue;
            }
            let b = shape.bounds();
            bodies.push((BodyRef::Actor(id.to_string()), shape, b));
        }
        BodySet { bodies }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BodyRef, &Shape)> {
        self.bodies.iter().map(|(r, s, _)| (r, s))
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    /// Nearest body along the ray within `max_range`. Ties go to the earlier body
    /// (obstacles in declaration order, then actors).
    pub fn ray_cast(&self, origin: Vec2, angle: f64, max_range: f64) -> Option<RayHit> {
        let dir = Vec2::from_angle(angle);
        let end = origin + dir * max_range;
        let ray_box = Aabb::new(
            Vec2::new(origin.x.min(end.x), origin.y.min(end.y)),
            Vec2::new(origin.x.max(end.x), origin.y.max(end.y)),
        );
        let mut best: Option<RayHit> = None;
        for (r, shape, bounds) in &self.bodies {
            if !bounds.intersects(&ray_box) {
                continue;
            }
            if let Some(t) = shape.ray_hit(origin, dir) {
                if t <= max_range && best.as_ref().is_none_or(|b| t < b.distance) {
                    best = Some(RayHit {
                        distance: t,
                        target: r.clone(),
                    });
                }
            }
        }
        best
    }

    /// Minimum distance from `shape` to any body in the set.
    pub fn clearance(&self, shape: &Shape) -> Option<(f64, BodyRef)> {
        let mut best: Option<(f64, BodyRef)> = None;
        for (r, s, _) in &self.bodies {
            let d = shape.distance(s);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, r.clone()));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub statics: Arc<StaticWorld>,
    pub actors: Vec<Actor>,
    pub environment: Environment,
}

impl World {
    /// Builds and validates a world. Paths in errors are relative to `world`.
    pub fn new(
        statics: StaticWorld,
        actors: Vec<Actor>,
        environment: Environment,
    ) -> Result<World, ValidationError> {
        let world = World {
            statics: Arc::new(statics),
            actors,
            environment,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let s = &*self.statics;
        let b = s.bounds;
        if !(b.min.is_finite() && b.max.is_finite() && b.max.x > b.min.x && b.max.y > b.min.y) {
            return Err(ValidationError::new("world.bounds", "must be a finite, non-empty rectangle"));
        }
        self.environment.validate("world.environment")?;

        let mut ids = BTreeSet::new();
        for o in &s.obstacles {
            let path = format!("world.obstacles.{}", o.id);
            if !ids.insert(o.id.as_str()) {
                return Err(ValidationError::new(path, format!("duplicate obstacle id `{}`", o.id)));
            }
            o.shape
                .validate()
                .map_err(|e| ValidationError::new(format!("{path}.shape"), e.to_string()))?;
            let ob = o.shape.bounds();
            if !(b.contains(ob.min) && b.contains(ob.max)) {
                return Err(ValidationError::new(format!("{path}.shape"), "lies outside world bounds"));
            }
        }

        let lane_ids: BTreeSet<&str> = s.lanes.iter().map(|l| l.id.as_str()).collect();
        if lane_ids.len() != s.lanes.len() {
            let mut seen = BTreeSet::new();
            let dup = s.lanes.iter().find(|l| !seen.insert(l.id.as_str())).unwrap();
            return Err(ValidationError::new(
                format!("world.lanes.{}", dup.id),
                format!("duplicate lane id `{}`", dup.id),
            ));
        }
        for l in &s.lanes {
            let path = format!("world.lanes.{}", l.id);
            if l.centerline.len() < 2 {
                return Err(ValidationError::new(format!("{path}.centerline"), "needs at least 2 points"));
            }
            if l.centerline.iter().any(|p| !p.is_finite()) {
                return Err(ValidationError::new(format!("{path}.centerline"), "non-finite point"));
            }
            if l.centerline.windows(2).any(|w| w[0] == w[1]) {
                return Err(ValidationError::new(
                    format!("{path}.centerline"),
                    "consecutive points must be distinct",
                ));
            }
            if !(l.width.is_finite() && l.width > 0.0) {
                return Err(ValidationError::new(format!("{path}.width"), "must be > 0"));
            }
            if !(l.speed_limit.is_finite() && l.speed_limit >= 0.0) {
                return Err(ValidationError::new(format!("{path}.speed_limit"), "must be >= 0"));
            }
            if let Some(bad) = l.successors.iter().find(|id| !lane_ids.contains(id.as_str())) {
                return Err(ValidationError::new(
                    format!("{path}.successors"),
                    format!("unknown lane id `{bad}`"),
                ));
            }
        }

        let mut actor_ids = BTreeSet::new();
        let mut egos = 0;
        for a in &self.actors {
            let path = format!("actors.{}", a.id);
            if !actor_ids.insert(a.id.as_str()) {
                return Err(ValidationError::new(path, format!("duplicate actor id `{}`", a.id)));
            }
            if a.kind == ActorKind::Ego {
                egos += 1;
            }
            let st = &a.state;
            if !st.pose.is_finite() {
                return Err(ValidationError::new(format!("{path}.state.pose"), "non-finite pose"));
            }
            if !b.contains(st.pose.position()) {
                return Err(ValidationError::new(format!("{path}.state.pose"), "outside world bounds"));
            }
            if !(st.speed.is_finite() && st.speed >= 0.0) {
                return Err(ValidationError::new(format!("{path}.state.speed"), "must be finite and >= 0"));
            }
            let p = &a.params;
            for (name, v) in [
                ("wheelbase", p.wheelbase),
                ("steer_max", p.steer_max),
                ("capture_radius", p.capture_radius),
                ("accel_limit", p.accel_limit),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ValidationError::new(format!("{path}.params.{name}"), "must be > 0"));
                }
            }
            if st.steer.abs() > p.steer_max {
                return Err(ValidationError::new(format!("{path}.state.steer"), "exceeds steer_max"));
            }
            if !(a.footprint.length > 0.0 && a.footprint.width > 0.0) {
                return Err(ValidationError::new(format!("{path}.footprint"), "dimensions must be > 0"));
            }
            for (i, w) in a.script.iter().enumerate() {
                if !(w.x.is_finite() && w.y.is_finite() && w.speed.is_finite() && w.speed >= 0.0) {
                    return Err(ValidationError::new(
                        format!("{path}.script.{i}"),
                        "waypoint must be finite with speed >= 0",
                    ));
                }
            }
        }
        if egos != 1 {
            return Err(ValidationError::new("actors", format!("exactly one ego required, found {egos}")));
        }
        Ok(())
    }

    pub fn ego_index(&self) -> usize {
        self.actors
            .iter()
            .position(|a| a.kind == ActorKind::Ego)
            .expect("validated world has an ego")
    }

    pub fn ego(&self) -> &Actor {
        &self.actors[self.ego_index()]
    }

    pub fn bodies(&self, exclude: Option<&str>) -> BodySet {
        BodySet::new(
            &self.statics,
            self.actors.iter().map(|a| (a.id.as_str(), a.shape())),
            exclude,
        )
    }

    /// Nearest hit of a ray against every obstacle and actor footprint except `exclude`.
    pub fn ray_cast(
        &self,
        origin: Vec2,
        angle: f64,
        max_range: f64,
        exclude: Option<&str>,
    ) -> Option<RayHit> {
        self.bodies(exclude).ray_cast(origin, angle, max_range)
    }

    /// Clamps actor `idx` back inside the bounds, stopping it. Returns whether it had left.
    pub fn contain(&mut self, idx: usize) -> bool {
        let bounds = self.statics.bounds;
        let st = &mut self.actors[idx].state;
        let p = st.pose.position();
        if bounds.contains(p) {
            return false;
        }
        let q = bounds.clamp(p);
        st.pose.x = q.x;
        st.pose.y = q.y;
        st.speed = 0.0;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("control field `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("time step must be finite and > 0, got {0}")]
    BadTimeStep(f64),
}

/// One explicit-Euler step of the kinematic bicycle model.
///
/// Acceleration is capped symmetrically at μ·g and speed never drops below
/// zero. Pedestrians interpret `steer` directly as a yaw rate so they can turn
/// in place.
pub fn step_actor(actor: &Actor, control: Control, dt: f64, env: &Environment) -> Result<Actor, StepError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StepError::BadTimeStep(dt));
    }
    if !control.accel.is_finite() {
        return Err(StepError::NonFinite("accel"));
    }
    if !control.steer.is_finite() {
        return Err(StepError::NonFinite("steer"));
    }
    let mut next = actor.clone();
    let s = actor.state;
    let steer = control.steer.clamp(-actor.params.steer_max, actor.params.steer_max);
    let yaw_rate = match actor.kind {
        ActorKind::Pedestrian => steer,
        _ => s.speed / actor.params.wheelbase * fm::tan(steer),
    };
    let dir = s.pose.direction();
    let cap = env.max_accel();
    let accel = control.accel.clamp(-cap, cap);
    let speed = (s.speed + accel * dt).max(0.0);

    next.state = ActorState {
        pose: Pose2D::new(
            s.pose.x + dir.x * s.speed * dt,
            s.pose.y + dir.y * s.speed * dt,
            s.pose.heading + yaw_rate * dt,
        ),
        speed,
        accel: (speed - s.speed) / dt,
        steer,
        yaw_rate,
    };
    Ok(next)
}

/// Moves a scripted actor one step along its waypoint list.
///
/// Steering is pure pursuit on the current waypoint (full lock when the
/// waypoint is behind), speed is a proportional law on the waypoint's target
/// speed. Once the script is exhausted the actor brakes to a standstill.
/// Actors without a script stay put.
pub fn advance_scripted(actor: &Actor, dt: f64, env: &Environment) -> Actor {
    if actor.kind == ActorKind::Ego || actor.script.is_empty() {
        let mut a = actor.clone();
        if actor.kind != ActorKind::Ego {
            a.state.speed = 0.0;
            a.state.accel = 0.0;
            a.state.yaw_rate = 0.0;
        }
        return a;
    }
    let mut cur = actor.clone();
    let pos = cur.state.pose.position();
    while cur.next_waypoint < cur.script.len()
        && cur.script[cur.next_waypoint].position().dist(pos) <= cur.params.capture_radius
    {
        cur.next_waypoint += 1;
    }

    let s = cur.state;
    let control = match cur.script.get(cur.next_waypoint) {
        None => Control {
            accel: -(s.speed / dt).min(SCRIPT_ACCEL_LIMIT),
            steer: 0.0,
        },
        Some(wp) => {
            let to = wp.position() - pos;
            let alpha = normalize_angle(to.angle() - s.pose.heading);
            let steer_max = cur.params.steer_max;
            let steer = match cur.kind {
                ActorKind::Pedestrian => (PEDESTRIAN_HEADING_GAIN * alpha).clamp(-steer_max, steer_max),
                _ if alpha.abs() > PI / 2.0 => steer_max.copysign(alpha),
                _ => {
                    let d = to.norm().max(1e-9);
                    fm::atan(2.0 * cur.params.wheelbase * fm::sin(alpha) / d).clamp(-steer_max, steer_max)
                }
            };
            Control {
                accel: (SCRIPT_SPEED_GAIN * (wp.speed - s.speed)).clamp(-SCRIPT_ACCEL_LIMIT, SCRIPT_ACCEL_LIMIT),
                steer,
            }
        }
    };
    step_actor(&cur, control, dt, env).expect("script controls are finite")
}

/// Ground-truth view of one actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSnapshot {
    pub id: String,
    pub kind: ActorKind,
    pub state: ActorState,
    pub footprint: Footprint,
}

impl ActorSnapshot {
    pub fn shape(&self) -> Shape {
        self.footprint.shape_at(&self.state.pose)
    }
}

/// Noise-free snapshot of the world at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub tick: u64,
    pub time: f64,
    pub actors: Vec<ActorSnapshot>,
    pub environment: Environment,
    #[serde(skip)]
    pub statics: Arc<StaticWorld>,
}

impl Scene {
    pub fn ego(&self) -> &ActorSnapshot {
        self.actors
            .iter()
            .find(|a| a.kind == ActorKind::Ego)
            .expect("scene has an ego")
    }

    pub fn actor(&self, id: &str) -> Option<&ActorSnapshot> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn bodies(&self, exclude: Option<&str>) -> BodySet {
        BodySet::new(
            &self.statics,
            self.actors.iter().map(|a| (a.id.as_str(), a.shape())),
            exclude,
        )
    }

    /// Distance from the ego footprint to the nearest other body, if any exist.
    pub fn ego_clearance(&self) -> Option<(f64, BodyRef)> {
        let ego = self.ego();
        self.bodies(Some(&ego.id)).clearance(&ego.shape())
    }
}

pub fn ground_truth(world: &World, tick: u64, dt: f64) -> Scene {
    Scene {
        tick,
        time: tick as f64 * dt,
        actors: world.actors.iter().map(Actor::snapshot).collect(),
        environment: world.environment,
        statics: Arc::clone(&world.statics),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(id: &str, kind: ActorKind, pose: Pose2D, speed: f64) -> Actor {
        Actor {
            id: id.into(),
            kind,
            state: ActorState::at(pose, speed),
            footprint: Footprint::CAR,
            params: VehicleParams::default(),
            script: Vec::new(),
            next_waypoint: 0,
        }
    }

    fn open_world(actors: Vec<Actor>) -> World {
        World::new(
            StaticWorld {
                obstacles: vec![],
                lanes: vec![],
                bounds: Aabb::new(Vec2::new(-100.0, -100.0), Vec2::new(100.0, 100.0)),
            },
            actors,
            Environment::default(),
        )
        .unwrap()
    }

    #[test]
    fn standstill_is_a_fixed_point() {
        let a = car("ego", ActorKind::Ego, Pose2D::new(1.0, 2.0, 0.3), 0.0);
        let next = step_actor(&a, Control { accel: 0.0, steer: 0.0 }, 0.01, &Environment::default()).unwrap();
        assert_eq!(next, a);
    }

    #[test]
    fn straight_line_advances_exactly() {
        let a = car("ego", ActorKind::Ego, Pose2D::new(0.0, 0.0, 0.0), 10.0);
        let next = step_actor(&a, Control { accel: 0.0, steer: 0.0 }, 1.0, &Environment::default()).unwrap();
        assert_eq!(next.state.pose.x, 10.0);
        assert_eq!(next.state.pose.y, 0.0);
    }

    #[test]
    fn friction_clamps_deceleration_then_speed() {
        // decel capped at 0.3·9.81 = 2.943; 1 − 2.943 < 0 so speed clamps to 0.
        let a = car("ego", ActorKind::Ego, Pose2D::default(), 1.0);
        let env = Environment { friction: 0.3, ..Default::default() };
        let next = step_actor(&a, Control { accel: -5.0, steer: 0.0 }, 1.0, &env).unwrap();
        assert_eq!(next.state.speed, 0.0);
        assert_eq!(next.state.accel, -1.0);
        let fast = car("ego", ActorKind::Ego, Pose2D::default(), 10.0);
        let next = step_actor(&fast, Control { accel: -5.0, steer: 0.0 }, 1.0, &env).unwrap();
        assert!((next.state.speed - (10.0 - 2.943)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_control_names_field() {
        let a = car("ego", ActorKind::Ego, Pose2D::default(), 1.0);
        let env = Environment::default();
        let e = step_actor(&a, Control { accel: f64::NAN, steer: 0.0 }, 0.01, &env).unwrap_err();
        assert_eq!(e, StepError::NonFinite("accel"));
        let e = step_actor(&a, Control { accel: 0.0, steer: f64::INFINITY }, 0.01, &env).unwrap_err();
        assert_eq!(e, StepError::NonFinite("steer"));
    }

    #[test]
    fn scripted_straight_approach_has_no_lateral_deviation() {
        let mut a = car("car1", ActorKind::Vehicle, Pose2D::new(0.0, 0.0, 0.0), 5.0);
        a.script = vec![Waypoint { x: 10.0, y: 0.0, speed: 5.0 }];
        let env = Environment::default();
        for _ in 0..100 {
            a = advance_scripted(&a, 0.01, &env);
            assert_eq!(a.state.pose.y, 0.0);
            assert_eq!(a.state.pose.heading, 0.0);
        }
    }

    #[test]
    fn waypoint_behind_turns_at_full_lock_then_converges() {
        let mut a = car("car1", ActorKind::Vehicle, Pose2D::new(0.0, 0.0, 0.0), 3.0);
        a.script = vec![Waypoint { x: -15.0, y: 0.0, speed: 3.0 }];
        let env = Environment::default();
        let err = |a: &Actor| {
            let to = a.script[0].position() - a.state.pose.position();
            normalize_angle(to.angle() - a.state.pose.heading).abs()
        };
        let first = advance_scripted(&a, 0.01, &env);
        assert!((first.state.steer - a.params.steer_max).abs() < 1e-12);

        let mut errors = vec![err(&a)];
        for _ in 0..500 {
            a = advance_scripted(&a, 0.01, &env);
            if a.next_waypoint > 0 {
                break;
            }
            errors.push(err(&a));
        }
        // Once the error starts shrinking it keeps shrinking.
        let start = errors.windows(2).position(|w| w[1] < w[0]).unwrap();
        for w in errors[start..].windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "heading error grew: {} -> {}", w[0], w[1]);
        }
        assert!(*errors.last().unwrap() < PI / 2.0);
    }

    #[test]
    fn exhausted_script_decays_to_rest() {
        let mut a = car("car1", ActorKind::Vehicle, Pose2D::new(0.0, 0.0, 0.0), 4.0);
        a.script = vec![Waypoint { x: 1.0, y: 0.0, speed: 4.0 }];
        let env = Environment::default();
        let mut stopped_at = None;
        for i in 0..400 {
            a = advance_scripted(&a, 0.01, &env);
            assert!(a.state.speed >= 0.0);
            if a.state.speed == 0.0 && stopped_at.is_none() {
                stopped_at = Some(i);
            }
            if stopped_at.is_some() {
                assert_eq!(a.state.speed, 0.0);
            }
        }
        assert!(stopped_at.is_some());
    }

    #[test]
    fn ray_cast_reports_nearest_body() {
        let ego = car("ego", ActorKind::Ego, Pose2D::new(0.0, 0.0, 0.0), 0.0);
        let mut w = open_world(vec![ego]);
        let statics = Arc::make_mut(&mut w.statics);
        statics.obstacles.push(StaticObstacle {
            id: "far".into(),
            shape: Shape::Circle { center: Vec2::new(8.0, 0.0), radius: 1.0 },
            kind: ObstacleKind::Tree,
        });
        statics.obstacles.push(StaticObstacle {
            id: "near".into(),
            shape: Shape::Circle { center: Vec2::new(5.0, 0.0), radius: 1.0 },
            kind: ObstacleKind::Tree,
        });
        let hit = w.ray_cast(Vec2::ZERO, 0.0, 50.0, Some("ego")).unwrap();
        assert_eq!(hit.distance, 4.0);
        assert_eq!(hit.target, BodyRef::Obstacle("near".into()));
        assert!(w.ray_cast(Vec2::ZERO, PI, 50.0, Some("ego")).is_none());
        assert!(w.ray_cast(Vec2::ZERO, 0.0, 3.9, Some("ego")).is_none());
    }

    #[test]
    fn ray_cast_without_exclusion_hits_own_footprint() {
        let ego = car("ego", ActorKind::Ego, Pose2D::new(0.0, 0.0, 0.0), 0.0);
        let w = open_world(vec![ego]);
        let hit = w.ray_cast(Vec2::ZERO, 0.0, 50.0, None).unwrap();
        assert_eq!(hit.distance, 0.0);
        assert_eq!(hit.target, BodyRef::Actor("ego".into()));
    }

    #[test]
    fn containment_clamps_and_stops() {
        let ego = car("ego", ActorKind::Ego, Pose2D::new(99.0, 0.0, 0.0), 5.0);
        let mut w = open_world(vec![ego]);
        let next = step_actor(&w.actors[0], Control { accel: 0.0, steer: 0.0 }, 1.0, &w.environment).unwrap();
        w.actors[0] = next;
        assert!(w.contain(0));
        assert_eq!(w.actors[0].state.pose.x, 100.0);
        assert_eq!(w.actors[0].state.speed, 0.0);
        assert!(!w.contain(0));
    }

    #[test]
    fn ground_truth_time_and_identity() {
        let w = open_world(vec![car("ego", ActorKind::Ego, Pose2D::new(1.0, 1.0, 0.0), 2.0)]);
        let s0 = ground_truth(&w, 0, 0.01);
        assert_eq!(s0.time, 0.0);
        assert_eq!(s0.actors[0].state, w.actors[0].state);
        let s = ground_truth(&w, 250, 0.01);
        assert_eq!(s.time, 250.0 * 0.01);
    }

    #[test]
    fn validation_rejects_two_egos_and_duplicates() {
        let a = car("ego", ActorKind::Ego, Pose2D::default(), 0.0);
        let b = car("ego2", ActorKind::Ego, Pose2D::default(), 0.0);
        let err = World::new(StaticWorld { bounds: Aabb::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)), ..Default::default() }, vec![a.clone(), b], Environment::default()).unwrap_err();
        assert_eq!(err.path, "actors");
        let c = car("ego", ActorKind::Vehicle, Pose2D::default(), 0.0);
        let err = World::new(StaticWorld { bounds: Aabb::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)), ..Default::default() }, vec![a, c], Environment::default()).unwrap_err();
        assert_eq!(err.path, "actors.ego");
        assert!(err.message.contains("duplicate"));
    }
}
