//! Planar geometry shared by the world model, sensors and both channels.
//!
//! Transcendental functions go through `libm` so that traces are bit-identical
//! across platforms; `sqrt` is IEEE-exact and comes from std.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Platform-stable math.
pub mod fm {
    #[inline]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[inline]
    pub fn tan(x: f64) -> f64 {
        libm::tan(x)
    }
    #[inline]
    pub fn atan(x: f64) -> f64 {
        libm::atan(x)
    }
    #[inline]
    pub fn atan2(y: f64, x: f64) -> f64 {
        libm::atan2(y, x)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut r = a % two_pi;
    if r <= -PI {
        r += two_pi;
    } else if r > PI {
        r -= two_pi;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2 { x: a[0], y: a[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        Vec2::new(fm::cos(a), fm::sin(a))
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        fm::atan2(self.y, self.x)
    }

    pub fn rotate(self, a: f64) -> Vec2 {
        let (s, c) = (fm::sin(a), fm::cos(a));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Position plus heading. Heading is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2D {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Applies `local` expressed in this pose's frame.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let p = self.position() + local.position().rotate(self.heading);
        Pose2D::new(p.x, p.y, self.heading + local.heading)
    }

    /// Expresses a world point in this pose's frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.heading)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Aabb { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }
}

/// A rigid planar body outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle { center: Vec2, radius: f64 },
    /// Convex, counterclockwise.
    Polygon { vertices: Vec<Vec2> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("radius must be > 0 and finite, got {0}")]
    BadRadius(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has non-finite coordinates")]
    NonFinite,
    #[error("polygon area must be > 0 (vertices must be counterclockwise)")]
    Degenerate,
    #[error("polygon is not convex at vertex {0}")]
    NotConvex(usize),
}

/// Signed area, positive for counterclockwise winding.
pub fn polygon_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>() * 0.5
}

impl Shape {
    pub fn rect(min: Vec2, max: Vec2) -> Shape {
        Shape::Polygon {
            vertices: Aabb::new(min, max).corners().to_vec(),
        }
    }

    /// Rectangle of `length` × `width` centred on `pose`, aligned with its heading.
    pub fn oriented_rect(pose: &Pose2D, length: f64, width: f64) -> Shape {
        let (hl, hw) = (length * 0.5, width * 0.5);
        let vertices = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
            .iter()
            .map(|&(x, y)| pose.position() + Vec2::new(x, y).rotate(pose.heading))
            .collect();
        Shape::Polygon { vertices }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        match self {
            Shape::Circle { center, radius } => {
                if !center.is_finite() {
                    return Err(ShapeError::NonFinite);
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(ShapeError::BadRadius(*radius));
                }
                Ok(())
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(ShapeError::TooFewVertices(n));
                }
                if vertices.iter().any(|v| !v.is_finite()) {
                    return Err(ShapeError::NonFinite);
                }
                if polygon_area(vertices) <= 0.0 {
                    return Err(ShapeError::Degenerate);
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    if (b - a).cross(c - b) < -1e-12 {
                        return Err(ShapeError::NotConvex((i + 1) % n));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn centroid(&self) -> Vec2 {
        match self {
            Shape::Circle { center, .. } => *center,
            Shape::Polygon { vertices } => {
                let a = polygon_area(vertices);
                let n = vertices.len();
                let mut c = Vec2::ZERO;
                for i in 0..n {
                    let (p, q) = (vertices[i], vertices[(i + 1) % n]);
                    c = c + (p + q) * p.cross(q);
                }
                c * (1.0 / (6.0 * a))
            }
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Shape::Circle { center, radius } => Aabb::new(
                *center - Vec2::new(*radius, *radius),
                *center + Vec2::new(*radius, *radius),
            ),
            Shape::Polygon { vertices } => {
                let mut min = vertices[0];
                let mut max = vertices[0];
                for v in vertices {
                    min = Vec2::new(min.x.min(v.x), min.y.min(v.y));
                    max = Vec2::new(max.x.max(v.x), max.y.max(v.y));
                }
                Aabb::new(min, max)
            }
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Shape::Circle { center, radius } => (p - *center).dot(p - *center) <= radius * radius,
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| (vertices[(i + 1) % n] - vertices[i]).cross(p - vertices[i]) >= 0.0)
            }
        }
    }

    /// Smallest `t ≥ 0` such that `origin + t·dir` lies on or inside the shape.
    /// `dir` must be unit length. Returns 0 when the origin is inside.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self {
            Shape::Circle { center, radius } => {
                let oc = origin - *center;
                let c = oc.dot(oc) - radius * radius;
                if c <= 0.0 {
                    return Some(0.0);
                }
                let b = oc.dot(dir);
                if b >= 0.0 {
                    return None;
                }
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                // Numerically stable root for the near intersection.
                let t = c / (-b + disc.sqrt());
                Some(t.max(0.0))
            }
            Shape::Polygon { vertices } => {
                if self.contains(origin) {
                    return Some(0.0);
                }
                let n = vertices.len();
                let mut best: Option<f64> = None;
                for i in 0..n {
                    let a = vertices[i];
                    let e = vertices[(i + 1) % n] - a;
                    let denom = dir.cross(e);
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let ao = a - origin;
                    let t = ao.cross(e) / denom;
                    let u = ao.cross(dir) / denom;
                    if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                        best = Some(best.map_or(t, |b: f64| b.min(t)));
                    }
                }
                best
            }
        }
    }

    /// Euclidean distance from a point to the shape (0 inside).
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        match self {
            Shape::Circle { center, radius } => (p.dist(*center) - radius).max(0.0),
            Shape::Polygon { vertices } => {
                if self.contains(p) {
                    return 0.0;
                }
                let n = vertices.len();
                (0..n)
                    .map(|i| point_segment_distance(p, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Minimum distance between two shapes, 0 when they overlap or touch.
    pub fn distance(&self, other: &Shape) -> f64 {
        match (self, other) {
            (Shape::Circle { center: a, radius: ra }, Shape::Circle { center: b, radius: rb }) => {
                (a.dist(*b) - ra - rb).max(0.0)
            }
            (Shape::Circle { center, radius }, poly @ Shape::Polygon { .. })
            | (poly @ Shape::Polygon { .. }, Shape::Circle { center, radius }) => {
                (poly.distance_to_point(*center) - radius).max(0.0)
            }
            (Shape::Polygon { vertices: a }, Shape::Polygon { vertices: b }) => {
                if convex_overlap(a, b) {
                    return 0.0;
                }
                let mut best = f64::INFINITY;
                for (p, q) in [(a, b), (b, a)] {
                    let m = q.len();
                    for v in p.iter() {
                        for j in 0..m {
                            best = best.min(point_segment_distance(*v, q[j], q[(j + 1) % m]));
                        }
                    }
                }
                best
            }
        }
    }

    /// Whether the shape overlaps the closed axis-aligned box.
    pub fn overlaps_box(&self, b: &Aabb) -> bool {
        match self {
            Shape::Circle { center, radius } => {
                let q = b.clamp(*center);
                (q - *center).dot(q - *center) <= radius * radius
            }
            Shape::Polygon { vertices } => convex_overlap(vertices, &b.corners()),
        }
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Separating-axis test for two convex polygons; touching counts as overlap.
pub fn convex_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let axis = (poly[(i + 1) % n] - poly[i]).perp();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

fn project(poly: &[Vec2], axis: Vec2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
