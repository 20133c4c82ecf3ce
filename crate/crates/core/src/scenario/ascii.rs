//! Character-grid worlds.
//!
//! Each character is a 1 m cell. The first line is the northmost row, so the
//! cell at row `r`, column `c` of an `h`-row grid covers
//! `[c, c+1] × [h-r-1, h-r]`.
//!
//! | char | meaning |
//! |------|---------|
//! | `#`  | obstacle |
//! | `.`  | free |
//! | `-`  | lane cell, east-west |
//! | `\|` | lane cell, north-south |

use crate::geom::{Aabb, Shape, Vec2};
use crate::world::{Lane, ObstacleKind, StaticObstacle, StaticWorld};

pub const GRID_LANE_WIDTH: f64 = 3.5;
const GRID_SPEED_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsciiError {
    #[error("empty grid")]
    Empty,
    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("unknown character {ch:?} at row {row}, column {column}")]
    UnknownChar { ch: char, row: usize, column: usize },
}

/// Parses a grid into static geometry. Rows and columns in errors are 1-based.
pub fn parse_ascii_world(text: &str) -> Result<StaticWorld, AsciiError> {
    let rows: Vec<Vec<char>> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).chars().collect())
        .collect();
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 {
        return Err(AsciiError::Empty);
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != w {
            return Err(AsciiError::Ragged {
                row: r + 1,
                expected: w,
                found: row.len(),
            });
        }
        if let Some(c) = row.iter().position(|ch| !matches!(ch, '#' | '.' | '-' | '|')) {
            return Err(AsciiError::UnknownChar {
                ch: row[c],
                row: r + 1,
                column: c + 1,
            });
        }
    }

    let top = h as f64;
    let cell_y0 = |r: usize| top - r as f64 - 1.0;

    let mut obstacles = Vec::new();
    for (x0, y0, x1, y1) in merge_rectangles(&rows, '#') {
        obstacles.push(StaticObstacle {
            id: format!("grid_{}", obstacles.len()),
            shape: Shape::rect(
                Vec2::new(x0 as f64, cell_y0(y1)),
                Vec2::new(x1 as f64 + 1.0, cell_y0(y0) + 1.0),
            ),
            kind: ObstacleKind::Other,
        });
    }

    let mut lanes = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for (c0, c1) in runs(row.iter().map(|&ch| ch == '-')) {
            let y = cell_y0(r) + 0.5;
            lanes.push(grid_lane(
                format!("lane_h{}", lanes.len()),
                Vec2::new(c0 as f64, y),
                Vec2::new(c1 as f64 + 1.0, y),
            ));
        }
    }
    let n_h = lanes.len();
    for c in 0..w {
        for (r0, r1) in runs(rows.iter().map(|row| row[c] == '|')) {
            let x = c as f64 + 0.5;
            lanes.push(grid_lane(
                format!("lane_v{}", lanes.len() - n_h),
                Vec2::new(x, cell_y0(r1)),
                Vec2::new(x, cell_y0(r0) + 1.0),
            ));
        }
    }

    Ok(StaticWorld {
        obstacles,
        lanes,
        bounds: Aabb::new(Vec2::ZERO, Vec2::new(w as f64, top)),
    })
}

fn grid_lane(id: String, a: Vec2, b: Vec2) -> Lane {
    Lane {
        id,
        centerline: vec![a, b],
        width: GRID_LANE_WIDTH,
        successors: Vec::new(),
        speed_limit: GRID_SPEED_LIMIT,
    }
}

/// Maximal runs of `true`, as inclusive index ranges.
fn runs(cells: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, on) in cells.enumerate() {
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        out.push((s, n - 1));
    }
    out
}

/// Greedy cover of the `ch` cells by disjoint rectangles, returned as inclusive
/// `(col0, row0, col1, row1)`. Each rectangle grows right as far as possible
/// from its top-left cell, then down while the full span is available.
pub fn merge_rectangles(rows: &[Vec<char>], ch: char) -> Vec<(usize, usize, usize, usize)> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    let mut used = vec![vec![false; w]; h];
    let free = |used: &Vec<Vec<bool>>, r: usize, c: usize| rows[r][c] == ch && !used[r][c];
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !free(&used, r, c) {
                continue;
            }
            let mut c1 = c;
            while c1 + 1 < w && free(&used, r, c1 + 1) {
                c1 += 1;
            }
            let mut r1 = r;
            while r1 + 1 < h && (c..=c1).all(|k| free(&used, r1 + 1, k)) {
                r1 += 1;
            }
            for row in used.iter_mut().take(r1 + 1).skip(r) {
                for cell in row.iter_mut().take(c1 + 1).skip(c) {
                    *cell = true;
                }
            }
            out.push((c, r, c1, r1));
        }
    }
    out
}
