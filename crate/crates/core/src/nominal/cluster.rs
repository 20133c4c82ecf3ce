//! Static background removal and single-linkage clustering of lidar returns.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    /// Linkage distance.
    pub d_c: f64,
    /// Smaller clusters are discarded.
    pub n_min: usize,
    /// Returns this close to a map point are background.
    pub map_margin: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            d_c: 0.7,
            n_min: 3,
            map_margin: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: Vec2,
    /// Largest member distance from the centroid.
    pub radius: f64,
    pub points: Vec<Vec2>,
}

/// Uniform bucket index over a point set for fixed-radius queries.
pub struct SpatialHash {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<Vec2>,
}

impl SpatialHash {
    pub fn new(points: &[Vec2], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(*p, cell)).or_default().push(i);
        }
        SpatialHash {
            cell,
            buckets,
            points: points.to_vec(),
        }
    }

    fn key(p: Vec2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Indices of points within `r <= cell` of `p`, ascending.
    pub fn within(&self, p: Vec2, r: f64) -> Vec<usize> {
        let (kx, ky) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    out.extend(b.iter().copied().filter(|&i| self.points[i].dist(p) <= r));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn any_within(&self, p: Vec2, r: f64) -> bool {
        let (kx, ky) = Self::key(p, self.cell);
        (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                self.buckets
                    .get(&(kx + dx, ky + dy))
                    .is_some_and(|b| b.iter().any(|&i| self.points[i].dist(p) <= r))
            })
        })
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Removes returns near the map, links the rest at `d_c`, and keeps
/// clusters of at least `n_min` points. Clusters come out in order of their
/// first member.
pub fn cluster(points: &[Vec2], map: Option<&SpatialHash>, cfg: &ClusterConfig) -> Vec<Cluster> {
    let fg: Vec<Vec2> = points
        .iter()
        .copied()
        .filter(|p| map.is_none_or(|m| !m.any_within(*p, cfg.map_margin)))
        .collect();
    let index = SpatialHash::new(&fg, cfg.d_c);
    let mut parent: Vec<usize> = (0..fg.len()).collect();
    for i in 0..fg.len() {
        for j in index.within(fg[i], cfg.d_c) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Vec2>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..fg.len() {
        let r = find(&mut parent, i);
        let k = *slot.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(fg[i]);
    }
    groups
        .into_iter()
        .filter(|(_, g)| g.len() >= cfg.n_min.max(1))
        .map(|(_, g)| {
            let n = g.len() as f64;
            let c = g.iter().fold(Vec2::ZERO, |s, p| s + *p) * (1.0 / n);
            let radius = g.iter().map(|p| p.dist(c)).fold(0.0, f64::max);
            Cluster {
                centroid: c,
                radius,
                points: g,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(cluster(&[], None, &ClusterConfig::default()).is_empty());
    }

    #[test]
    fn two_close_points_with_n_min_one() {
        let cfg = ClusterConfig {
            n_min: 1,
            ..Default::default()
        };
        let c = cluster(&[Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0)], None, &cfg);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].points.len(), 2);
    }

    #[test]
    fn small_groups_dropped_and_chains_linked() {
        let mut pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64 * 0.6, 0.0)).collect();
        pts.push(Vec2::new(20.0, 20.0));
        pts.push(Vec2::new(20.3, 20.0));
        let c = cluster(&pts, None, &ClusterConfig::default());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].points.len(), 10);
        assert!((c[0].centroid.x - 2.7).abs() < 1e-12);
    }

    #[test]
    fn mapped_points_are_removed() {
        let map: Vec<Vec2> = (0..20).map(|i| Vec2::new(i as f64 * 0.25, 0.0)).collect();
        let h = SpatialHash::new(&map, 0.3);
        let scan: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64 * 0.4, 0.1)).collect();
        assert!(cluster(&scan, Some(&h), &ClusterConfig::default()).is_empty());
    }

    #[test]
    fn spatial_hash_matches_brute_force() {
        let pts: Vec<Vec2> = (0..200)
            .map(|i| Vec2::new(((i * 37) % 101) as f64 * 0.13, ((i * 53) % 97) as f64 * 0.11))
            .collect();
        let h = SpatialHash::new(&pts, 0.7);
        for q in pts.iter().step_by(7) {
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].dist(*q) <= 0.7).collect();
            assert_eq!(h.within(*q, 0.7), brute);
        }
    }
}
