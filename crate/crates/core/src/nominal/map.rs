//! Offline mapping pre-pass and its persisted artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{Shape, Vec2};
use crate::world::StaticWorld;

pub const MAP_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAP_SPACING: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: unsupported map format version {found}")]
    Version { path: String, found: u32 },
    #[error("map spacing must be finite and > 0, got {0}")]
    Spacing(f64),
}

/// Points sampled along every static obstacle boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMap {
    pub format_version: u32,
    pub spacing: f64,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneEntry {
    pub id: String,
    pub centerline: Vec<Vec2>,
    pub width: f64,
    pub successors: Vec<String>,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneMap {
    pub format_version: u32,
    pub lanes: Vec<LaneEntry>,
}

/// Samples a closed outline so that neighbouring points are at most
/// `spacing` apart along it. Polygon vertices are always included.
pub fn sample_boundary(shape: &Shape, spacing: f64) -> Vec<Vec2> {
    match shape {
        Shape::Circle { center, radius } => {
            let n = ((2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize).max(3);
            (0..n)
                .map(|k| *center + Vec2::from_angle(2.0 * std::f64::consts::PI * k as f64 / n as f64) * *radius)
                .collect()
        }
        Shape::Polygon { vertices } => {
            let mut out = Vec::new();
            for (i, &a) in vertices.iter().enumerate() {
                let b = vertices[(i + 1) % vertices.len()];
                let n = ((a.dist(b) / spacing - 1e-9).ceil() as usize).max(1);
                out.extend((0..n).map(|k| a + (b - a) * (k as f64 / n as f64)));
            }
            out
        }
    }
}

pub fn build_map(world: &StaticWorld, spacing: f64) -> Result<(PointMap, LaneMap), MapError> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(MapError::Spacing(spacing));
    }
    let points = world
        .obstacles
        .iter()
        .flat_map(|o| sample_boundary(&o.shape, spacing))
        .collect();
    let lanes = world
        .lanes
        .iter()
        .map(|l| LaneEntry {
            id: l.id.clone(),
            centerline: l.centerline.clone(),
            width: l.width,
            successors: l.successors.clone(),
            speed_limit: l.speed_limit,
        })
        .collect();
    Ok((
        PointMap {
            format_version: MAP_FORMAT_VERSION,
            spacing,
            points,
        },
        LaneMap {
            format_version: MAP_FORMAT_VERSION,
            lanes,
        },
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), MapError> {
    let mut text = serde_json::to_string_pretty(value).expect("map serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, MapError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| MapError::Io { path: p.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| MapError::Json { path: p, source })
}

/// Artifact paths for a map named `stem` inside `dir`.
pub fn map_paths(dir: &Path, stem: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("{stem}.pointmap.json")),
        dir.join(format!("{stem}.lanemap.json")),
    )
}

pub fn save_map(points: &PointMap, lanes: &LaneMap, point_path: &Path, lane_path: &Path) -> Result<(), MapError> {
    write_json(point_path, points)?;
    write_json(lane_path, lanes)
}

pub fn load_map(point_path: &Path, lane_path: &Path) -> Result<(PointMap, LaneMap), MapError> {
    let points: PointMap = read_json(point_path)?;
    if points.format_version != MAP_FORMAT_VERSION {
        return Err(MapError::Version {
            path: point_path.display().to_string(),
            found: points.format_version,
        });
    }
    let lanes: LaneMap = read_json(lane_path)?;
    if lanes.format_version != MAP_FORMAT_VERSION {
        return Err(MapError::Version {
            path: lane_path.display().to_string(),
            found: lanes.format_version,
        });
    }
    Ok((points, lanes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::world::{ObstacleKind, StaticObstacle};

    fn world(obstacles: Vec<Shape>) -> StaticWorld {
        StaticWorld {
            obstacles: obstacles
                .into_iter()
                .enumerate()
                .map(|(i, shape)| StaticObstacle {
                    id: format!("o{i}"),
                    shape,
                    kind: ObstacleKind::Other,
                })
                .collect(),
            lanes: vec![],
            bounds: Aabb::new(Vec2::new(-50.0, -50.0), Vec2::new(50.0, 50.0)),
        }
    }

    #[test]
    fn square_gives_perimeter_over_spacing() {
        let w = world(vec![Shape::rect(Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0))]);
        let (pm, lm) = build_map(&w, 0.25).unwrap();
        assert_eq!(pm.points.len(), 32);
        assert!(lm.lanes.is_empty());
    }

    #[test]
    fn empty_world_and_bad_spacing() {
        let (pm, _) = build_map(&world(vec![]), 0.25).unwrap();
        assert!(pm.points.is_empty());
        assert!(matches!(build_map(&world(vec![]), 0.0), Err(MapError::Spacing(_))));
    }

    #[test]
    fn circle_points_lie_on_boundary_with_bounded_spacing() {
        let c = Vec2::new(3.0, -1.0);
        let pts = sample_boundary(&Shape::Circle { center: c, radius: 1.3 }, 0.25);
        for (i, p) in pts.iter().enumerate() {
            assert!((p.dist(c) - 1.3).abs() < 1e-12);
            assert!(p.dist(pts[(i + 1) % pts.len()]) <= 0.25);
        }
    }

    #[test]
    fn round_trip_through_files() {
        let w = world(vec![Shape::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 3.0))]);
        let (pm, lm) = build_map(&w, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pp, lp) = map_paths(dir.path(), "w");
        save_map(&pm, &lm, &pp, &lp).unwrap();
        let first = std::fs::read(&pp).unwrap();
        assert_eq!(load_map(&pp, &lp).unwrap(), (pm.clone(), lm.clone()));
        save_map(&pm, &lm, &pp, &lp).unwrap();
        assert_eq!(std::fs::read(&pp).unwrap(), first);
    }
}
