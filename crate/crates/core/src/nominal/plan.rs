//! Lane-relative candidate trajectories and their selection.

use serde::{Deserialize, Serialize};

use super::cluster::Cluster;
use super::localize::Estimate;
use crate::geom::{normalize_angle, Pose2D, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Number of lateral offsets.
    pub k: usize,
    /// Horizon, s.
    pub horizon: f64,
    /// Time between trajectory points, s.
    pub step: f64,
    /// Distance kept from the lane edges by the outermost candidates.
    pub lateral_margin: f64,
    /// Candidates are traced at no less than this speed.
    pub min_speed: f64,
    pub w_clear: f64,
    pub w_off: f64,
    pub w_smooth: f64,
    pub d_collide: f64,
    pub clear_cap: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            k: 7,
            horizon: 3.0,
            step: 0.1,
            lateral_margin: 1.0,
            min_speed: 1.0,
            w_clear: 1.0,
            w_off: 0.5,
            w_smooth: 1.0,
            d_collide: 0.5,
            clear_cap: 5.0,
        }
    }
}

/// Arc-length parametrised polyline that extends straight past both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pts: Vec<Vec2>,
    s: Vec<f64>,
}

impl Path {
    /// Drops repeated vertices. Needs at least two distinct points.
    pub fn new(points: &[Vec2]) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for &p in points {
            if pts.last().is_none_or(|q: &Vec2| q.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut s = vec![0.0];
        for w in pts.windows(2) {
            s.push(s.last().unwrap() + w[0].dist(w[1]));
        }
        Some(Path { pts, s })
    }

    pub fn reversed(&self) -> Self {
        let rev: Vec<Vec2> = self.pts.iter().rev().copied().collect();
        Path::new(&rev).expect("already valid")
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    fn segment(&self, s: f64) -> usize {
        let n = self.pts.len() - 1;
        match self.s.partition_point(|&x| x <= s) {
            0 => 0,
            i => (i - 1).min(n - 1),
        }
    }

    pub fn tangent(&self, s: f64) -> Vec2 {
        let i = self.segment(s);
        let d = self.pts[i + 1] - self.pts[i];
        d * (1.0 / d.norm())
    }

    /// Pose on the path at arc length `s`, shifted left by `offset`.
    pub fn pose_at(&self, s: f64, offset: f64) -> Pose2D {
        let i = self.segment(s);
        let t = self.tangent(s);
        let p = self.pts[i] + t * (s - self.s[i]) + t.perp() * offset;
        Pose2D::new(p.x, p.y, t.angle())
    }

    /// Arc length of the closest point (on the extended path) and the
    /// signed lateral offset of `p`, positive to the left.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let n = self.pts.len() - 1;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            let (a, b) = (self.pts[i], self.pts[i + 1]);
            let d = b - a;
            let len = d.norm();
            let mut u = (p - a).dot(d) / (len * len);
            if i > 0 {
                u = u.max(0.0);
            }
            if i < n - 1 {
                u = u.min(1.0);
            }
            let q = a + d * u;
            let dist = p.dist(q);
            if dist < best.0 {
                let lat = (d * (1.0 / len)).cross(p - q);
                best = (dist, self.s[i] + u * len, lat);
            }
        }
        (best.1, best.2)
    }

    /// Distance from `p` to the path without extension.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.pts
            .windows(2)
            .map(|w| crate::geom::point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrajectory {
    pub lateral_offset: f64,
    pub points: Vec<Pose2D>,
    /// `None` when colliding.
    pub cost: Option<f64>,
    /// Clearance to the nearest cluster; `None` without clusters.
    pub clearance: Option<f64>,
    pub mean_curvature: f64,
    pub colliding: bool,
}

/// Evenly spaced offsets across `[-(w/2 - m), w/2 - m]`.
pub fn offsets(width: f64, cfg: &PlannerConfig) -> Vec<f64> {
    let half = (width / 2.0 - cfg.lateral_margin).max(0.0);
    match cfg.k {
        0 => Vec::new(),
        1 => vec![0.0],
        k => (0..k)
            .map(|i| -half + 2.0 * half * i as f64 / (k - 1) as f64)
            .map(|o| if o.abs() < 1e-12 { 0.0 } else { o })
            .collect(),
    }
}

/// Traces one candidate per offset from the estimate's projection onto
/// `path`, over the horizon at the estimate speed (floored at `min_speed`).
pub fn generate_candidates(path: &Path, width: f64, est: &Estimate, cfg: &PlannerConfig) -> Vec<CandidateTrajectory> {
    let (s0, _) = path.project(est.pose.position());
    let v = est.speed.max(cfg.min_speed);
    let n = (cfg.horizon / cfg.step).round() as usize;
    offsets(width, cfg)
        .into_iter()
        .map(|o| {
            let points: Vec<Pose2D> = (0..=n).map(|k| path.pose_at(s0 + v * cfg.step * k as f64, o)).collect();
            CandidateTrajectory {
                lateral_offset: o,
                mean_curvature: mean_curvature(&points),
                points,
                cost: None,
                clearance: None,
                colliding: false,
            }
        })
        .collect()
}

/// Mean of |Δheading| / |Δposition| over consecutive points.
pub fn mean_curvature(points: &[Pose2D]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let sum: f64 = points
        .windows(2)
        .map(|w| {
            let ds = w[0].position().dist(w[1].position());
            if ds > 0.0 {
                normalize_angle(w[1].heading - w[0].heading).abs() / ds
            } else {
                0.0
            }
        })
        .sum();
    sum / (points.len() - 1) as f64
}

/// Smallest distance from any trajectory point to any cluster member, less
/// the ego half-width.
pub fn trajectory_clearance(points: &[Pose2D], clusters: &[Cluster], half_width: f64) -> Option<f64> {
    if clusters.is_empty() {
        return None;
    }
    let d = points
        .iter()
        .flat_map(|p| clusters.iter().flat_map(|c| &c.points).map(move |q| p.position().dist(*q)))
        .fold(f64::INFINITY, f64::min);
    Some(d - half_width)
}

pub fn score(c: &mut CandidateTrajectory, clusters: &[Cluster], half_width: f64, cfg: &PlannerConfig) {
    c.clearance = trajectory_clearance(&c.points, clusters, half_width);
    c.colliding = c.clearance.is_some_and(|d| d < cfg.d_collide);
    c.cost = (!c.colliding).then(|| {
        let clear_term = c.clearance.map_or(0.0, |d| (1.0 / d - 1.0 / cfg.clear_cap).max(0.0));
        cfg.w_clear * clear_term + cfg.w_off * c.lateral_offset.abs() + cfg.w_smooth * c.mean_curvature
    });
}

/// Index of the cheapest non-colliding candidate. Ties prefer the smaller
/// |offset|, then the earlier candidate.
pub fn select(candidates: &[CandidateTrajectory]) -> Option<usize> {
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(cost) = c.cost else { continue };
        let key = (cost, c.lateral_offset.abs(), i);
        if best.is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
            best = Some(key);
        }
    }
    best.map(|b| b.2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Path {
        Path::new(&[Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap()
    }

    fn est(x: f64, y: f64, speed: f64) -> Estimate {
        Estimate {
            pose: Pose2D::new(x, y, 0.0),
            speed,
        }
    }

    #[test]
    fn seven_offsets_include_centerline() {
        let o = offsets(3.5, &PlannerConfig::default());
        assert_eq!(o.len(), 7);
        assert_eq!(o[3], 0.0);
        assert!((o[6] - 0.75).abs() < 1e-12 && (o[0] + 0.75).abs() < 1e-12);
    }

    #[test]
    fn straight_centerline_candidate_length() {
        let cs = generate_candidates(&straight(), 3.5, &est(10.0, 0.3, 8.0), &PlannerConfig::default());
        let c = &cs[3];
        let first = c.points[0].position();
        let last = c.points.last().unwrap().position();
        assert!((first.dist(last) - 8.0 * 3.0).abs() < 1e-9);
        assert!(c.points.iter().all(|p| p.y == 0.0 && p.heading == 0.0));
        assert_eq!(c.mean_curvature, 0.0);
    }

    #[test]
    fn extends_past_lane_end() {
        let p = straight();
        assert_eq!(p.pose_at(110.0, 1.0).position(), Vec2::new(110.0, 1.0));
        assert_eq!(p.project(Vec2::new(-5.0, -2.0)), (-5.0, -2.0));
        assert_eq!(p.project(Vec2::new(120.0, 2.0)), (120.0, 2.0));
    }

    #[test]
    fn no_clusters_centerline_wins() {
        let cfg = PlannerConfig::default();
        let mut cs = generate_candidates(&straight(), 3.5, &est(0.0, 0.0, 5.0), &cfg);
        for c in &mut cs {
            score(c, &[], 0.9, &cfg);
        }
        assert_eq!(select(&cs), Some(3));
        assert_eq!(cs[3].cost, Some(0.0));
    }

    #[test]
    fn blocked_centerline_picks_offset_and_total_block_gives_none() {
        let cfg = PlannerConfig::default();
        // A wall of returns across the lane from y - r to y + r.
        let block = |y: f64, r: f64| {
            let points: Vec<Vec2> = (0..=20).map(|k| Vec2::new(12.0, y - r + r * k as f64 / 10.0)).collect();
            Cluster {
                centroid: Vec2::new(12.0, y),
                radius: r,
                points,
            }
        };
        let mut cs = generate_candidates(&straight(), 7.0, &est(0.0, 0.0, 5.0), &cfg);
        for c in &mut cs {
            score(c, &[block(0.0, 0.2)], 0.9, &cfg);
        }
        let i = select(&cs).unwrap();
        assert_ne!(cs[i].lateral_offset, 0.0);
        assert!(cs[3].colliding);
        for c in &mut cs {
            score(c, &[block(0.0, 4.0)], 0.9, &cfg);
        }
        assert_eq!(select(&cs), None);
    }

    #[test]
    fn curved_lane_points_stay_inside_margin() {
        let arc: Vec<Vec2> = (0..=60)
            .map(|i| {
                let a = i as f64 * 0.025;
                Vec2::new(30.0 * a.sin(), 30.0 * (1.0 - a.cos()))
            })
            .collect();
        let p = Path::new(&arc).unwrap();
        let cfg = PlannerConfig::default();
        let cs = generate_candidates(&p, 3.5, &est(5.0, 0.5, 6.0), &cfg);
        for c in &cs {
            for q in &c.points {
                assert!(p.distance(q.position()) <= 0.75 + 1e-9);
            }
            assert!(c.mean_curvature > 0.0);
        }
    }
}
