//! Marching-squares isolines over a raster. Grid nodes are the cell centres;
//! crossings are placed by linear interpolation along cell edges, and
//! segments are chained into polylines through shared edge crossings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::grid::IntensityGrid;

pub const DEFAULT_LEVELS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourLevel {
    pub level: f64,
    /// Polylines in km, each a list of `[x, y]` vertices. Closed rings
    /// repeat their first vertex at the end.
    pub lines: Vec<Vec<[f64; 2]>>,
}

/// `n` levels evenly spaced strictly inside `(min, max)`:
/// `min + (max − min)·k/(n + 1)` for `k = 1..=n`. Empty for a constant grid.
pub fn even_levels(grid: &IntensityGrid, n: usize) -> Vec<f64> {
    let (lo, hi) = (grid.min(), grid.max());
    if !(hi > lo) {
        return Vec::new();
    }
    (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
}

/// Identifies a crossing by the grid edge it lies on: horizontal edges
/// from node `(ix, iy)` to `(ix + 1, iy)` and vertical ones to `(ix, iy + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    H(usize, usize),
    V(usize, usize),
}

pub fn contours(grid: &IntensityGrid, levels: &[f64]) -> Vec<ContourLevel> {
    levels
        .iter()
        .map(|&level| ContourLevel {
            level,
            lines: isolines(grid, level),
        })
        .collect()
}

/// Contours at [`DEFAULT_LEVELS`] evenly spaced levels.
pub fn default_contours(grid: &IntensityGrid) -> Vec<ContourLevel> {
    contours(grid, &even_levels(grid, DEFAULT_LEVELS))
}

fn isolines(grid: &IntensityGrid, level: f64) -> Vec<Vec<[f64; 2]>> {
    let s = &grid.spec;
    let node = |ix: usize, iy: usize| {
        let c = s.center(ix, iy);
        [c.x, c.y]
    };
    let val = |ix: usize, iy: usize| grid.get(ix, iy);
    let crossing = |k: EdgeKey| -> [f64; 2] {
        let ((ax, ay), (bx, by)) = match k {
            EdgeKey::H(x, y) => ((x, y), (x + 1, y)),
            EdgeKey::V(x, y) => ((x, y), (x, y + 1)),
        };
        let (va, vb) = (val(ax, ay), val(bx, by));
        let t = if vb != va { (level - va) / (vb - va) } else { 0.5 };
        let (pa, pb) = (node(ax, ay), node(bx, by));
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for iy in 0..s.ny - 1 {
        for ix in 0..s.nx - 1 {
            // corners counter-clockwise from bottom-left
            let v = [val(ix, iy), val(ix + 1, iy), val(ix + 1, iy + 1), val(ix, iy + 1)];
            let above = v.map(|x| x > level);
            let case = above.iter().enumerate().fold(0u8, |acc, (i, &a)| acc | ((a as u8) << i));
            let bottom = EdgeKey::H(ix, iy);
            let right = EdgeKey::V(ix + 1, iy);
            let top = EdgeKey::H(ix, iy + 1);
            let left = EdgeKey::V(ix, iy);
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 | 10 => {
                    // saddle: the cell-centre average decides which corners connect
                    let centre_above = v.iter().sum::<f64>() / 4.0 > level;
                    if (case == 5) == centre_above {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut at: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (i, &(a, b)) in segments.iter().enumerate() {
        at.entry(a).or_default().push(i);
        at.entry(b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let next_from = |key: EdgeKey, used: &[bool]| at[&key].iter().copied().find(|&j| !used[j]);
    // open chains start at an end with a single segment; rings anywhere
    let starts: Vec<usize> = (0..segments.len())
        .filter(|&i| at[&segments[i].0].len() == 1 || at[&segments[i].1].len() == 1)
        .chain(0..segments.len())
        .collect();
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let (first, mut cur) = if at[&b].len() == 1 { (b, a) } else { (a, b) };
        let mut keys = vec![first, cur];
        while let Some(j) = next_from(cur, &used) {
            used[j] = true;
            let (p, q) = segments[j];
            cur = if p == cur { q } else { p };
            keys.push(cur);
        }
        lines.push(keys.into_iter().map(crossing).collect());
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridKind, GridSpec};

    fn grid(nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> IntensityGrid {
        let spec = GridSpec::new(0.0, nx as f64, 0.0, ny as f64, nx, ny).unwrap();
        let values = (0..nx * ny)
            .map(|i| {
                let c = spec.center_of(i);
                f(c.x, c.y)
            })
            .collect();
        IntensityGrid::new(spec, GridKind::Intensity, values).unwrap()
    }

    #[test]
    fn constant_has_no_lines() {
        let g = grid(5, 5, |_, _| 2.0);
        assert!(default_contours(&g).is_empty());
        assert!(contours(&g, &[1.0, 2.0, 3.0]).iter().all(|c| c.lines.is_empty()));
    }

    #[test]
    fn ramp_gives_straight_line() {
        let g = grid(6, 4, |x, _| x);
        let c = contours(&g, &[3.0]);
        assert_eq!(c[0].lines.len(), 1);
        let line = &c[0].lines[0];
        assert_eq!(line.len(), 4);
        assert!(line.iter().all(|p| (p[0] - 3.0).abs() < 1e-12));
    }

    #[test]
    fn bump_gives_closed_ring() {
        let g = grid(21, 21, |x, y| -((x - 10.5).powi(2) + (y - 10.5).powi(2)));
        let c = contours(&g, &[-16.0]);
        assert_eq!(c[0].lines.len(), 1);
        let ring = &c[0].lines[0];
        assert_eq!(ring.first(), ring.last());
        for p in ring {
            let r = ((p[0] - 10.5).powi(2) + (p[1] - 10.5).powi(2)).sqrt();
            assert!((r - 4.0).abs() < 0.1, "{r}");
        }
    }

    #[test]
    fn ten_levels_inside_range() {
        let g = grid(4, 4, |x, y| x + y);
        let lv = even_levels(&g, 10);
        assert_eq!(lv.len(), 10);
        assert!(lv.iter().all(|&l| l > g.min() && l < g.max()));
    }
}
