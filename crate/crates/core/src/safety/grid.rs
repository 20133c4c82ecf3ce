//! Safety-rated occupancy grid built from ground truth.

use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec2};
use crate::world::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Cell edge, meters.
    pub resolution: f64,
    /// The grid spans this far from the ego in each axis direction.
    pub half_extent: f64,
    /// Distance over which ratings decay linearly from 1 to 0.
    pub inflation_radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            resolution: 0.5,
            half_extent: 40.0,
            inflation_radius: 2.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("resolution", self.resolution),
            ("half_extent", self.half_extent),
            ("inflation_radius", self.inflation_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("grid.{name} must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyGrid {
    /// World position of the lower-left corner of cell (0, 0).
    pub origin: Vec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major from the bottom row, values in [0, 1].
    pub ratings: Vec<f64>,
    /// Cells overlapped by a body.
    pub occupied: Vec<(usize, usize)>,
}

impl SafetyGrid {
    pub fn empty(origin: Vec2, resolution: f64, width: usize, height: usize) -> Self {
        SafetyGrid {
            origin,
            resolution,
            width,
            height,
            ratings: vec![0.0; width * height],
            occupied: Vec::new(),
        }
    }

    pub fn rating(&self, i: usize, j: usize) -> f64 {
        self.ratings[j * self.width + i]
    }

    pub fn cell_box(&self, i: usize, j: usize) -> Aabb {
        let min = self.origin + Vec2::new(i as f64, j as f64) * self.resolution;
        Aabb::new(min, min + Vec2::new(self.resolution, self.resolution))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.resolution
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let q = (p - self.origin) * (1.0 / self.resolution);
        if q.x < 0.0 || q.y < 0.0 {
            return None;
        }
        let (i, j) = (q.x.floor() as usize, q.y.floor() as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    /// Index range of cells whose boxes may touch `b`, clamped to the grid.
    fn cell_range(&self, b: &Aabb) -> Option<(usize, usize, usize, usize)> {
        let lo = (b.min - self.origin) * (1.0 / self.resolution);
        let hi = (b.max - self.origin) * (1.0 / self.resolution);
        if hi.x < 0.0 || hi.y < 0.0 || lo.x >= self.width as f64 || lo.y >= self.height as f64 {
            return None;
        }
        let i0 = (lo.x.floor().max(0.0) as usize).saturating_sub(1);
        let j0 = (lo.y.floor().max(0.0) as usize).saturating_sub(1);
        let i1 = (hi.x.floor() as usize + 1).min(self.width - 1);
        let j1 = (hi.y.floor() as usize + 1).min(self.height - 1);
        Some((i0, j0, i1, j1))
    }

    /// Cells with a rating at or above `threshold`.
    pub fn hot_cells(&self, threshold: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |j| (0..self.width).map(move |i| (i, j)))
            .filter(move |&(i, j)| self.rating(i, j) >= threshold)
    }
}

/// Rates every cell of an ego-centred grid. Cells overlapping any body other
/// than the ego rate 1; other cells rate `max(0, 1 - d / r)` where `d` is the
/// centre distance to the nearest occupied cell.
pub fn build_grid(scene: &Scene, cfg: &GridConfig) -> SafetyGrid {
    let ego = scene.ego();
    let n = (2.0 * cfg.half_extent / cfg.resolution).ceil() as usize;
    let origin = ego.state.pose.position() - Vec2::new(cfg.half_extent, cfg.half_extent);
    let mut grid = SafetyGrid::empty(origin, cfg.resolution, n, n);

    let bodies = scene.bodies(Some(&ego.id));
    let mut occ = vec![false; n * n];
    for (_, shape) in bodies.iter() {
        let Some((i0, j0, i1, j1)) = grid.cell_range(&shape.bounds()) else {
            continue;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                if !occ[j * n + i] && shape.overlaps_box(&grid.cell_box(i, j)) {
                    occ[j * n + i] = true;
                }
            }
        }
    }
    grid.occupied = (0..n * n).filter(|&k| occ[k]).map(|k| (k % n, k / n)).collect();

    let r = cfg.inflation_radius;
    let reach = (r / cfg.resolution).ceil() as isize;
    for &(oi, oj) in &grid.occupied {
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (i, j) = (oi as isize + di, oj as isize + dj);
                if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                    continue;
                }
                let d = ((di * di + dj * dj) as f64).sqrt() * cfg.resolution;
                let v = (1.0 - d / r).max(0.0);
                let cell = &mut grid.ratings[j as usize * n + i as usize];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Pose2D, Shape};
    use crate::world::{ActorKind, ActorSnapshot, ActorState, Environment, Footprint, ObstacleKind, StaticObstacle, StaticWorld};
    use std::sync::Arc;

    fn scene(obstacles: Vec<StaticObstacle>) -> Scene {
        Scene {
            tick: 0,
            time: 0.0,
            actors: vec![ActorSnapshot {
                id: "ego".into(),
                kind: ActorKind::Ego,
                state: ActorState::at(Pose2D::new(0.0, 0.0, 0.0), 0.0),
                footprint: Footprint::CAR,
            }],
            environment: Environment::default(),
            statics: Arc::new(StaticWorld {
                obstacles,
                lanes: vec![],
                bounds: Aabb::new(Vec2::new(-100.0, -100.0), Vec2::new(100.0, 100.0)),
            }),
        }
    }

    fn small_cfg() -> GridConfig {
        GridConfig {
            resolution: 0.5,
            half_extent: 10.0,
            inflation_radius: 2.0,
        }
    }

    #[test]
    fn empty_scene_rates_zero_and_ego_is_excluded() {
        let g = build_grid(&scene(vec![]), &small_cfg());
        assert!(g.ratings.iter().all(|&r| r == 0.0));
        assert_eq!((g.width, g.height), (40, 40));
    }

    #[test]
    fn occupied_cells_rate_one_and_decay_linearly() {
        // A single cell-sized box at cell (30, 20).
        let cfg = small_cfg();
        let probe = SafetyGrid::empty(Vec2::new(-10.0, -10.0), 0.5, 40, 40);
        let b = probe.cell_box(30, 20);
        let inner = Aabb::new(b.min + Vec2::new(0.1, 0.1), b.max - Vec2::new(0.1, 0.1));
        let o = StaticObstacle {
            id: "o".into(),
            shape: Shape::rect(inner.min, inner.max),
            kind: ObstacleKind::Other,
        };
        let g = build_grid(&scene(vec![o]), &cfg);
        assert_eq!(g.occupied, vec![(30, 20)]);
        assert_eq!(g.rating(30, 20), 1.0);
        assert_eq!(g.rating(32, 20), 0.5);
        assert_eq!(g.rating(34, 20), 0.0);
        assert_eq!(g.rating(26, 20), 0.0);
        assert!((g.rating(31, 21) - (1.0 - 0.5 * 2f64.sqrt() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn cell_of_inverts_cell_center() {
        let g = build_grid(&scene(vec![]), &small_cfg());
        for (i, j) in [(0, 0), (5, 17), (39, 39)] {
            assert_eq!(g.cell_of(g.cell_center(i, j)), Some((i, j)));
        }
        assert_eq!(g.cell_of(Vec2::new(50.0, 0.0)), None);
    }
}
