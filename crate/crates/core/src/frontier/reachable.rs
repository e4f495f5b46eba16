//! Thresholded reachable sets and their geometric measurements.

use serde::{Deserialize, Serialize};

use super::grid::{Block, GridSpec};
use super::level_set::LevelSetState;
use super::{FrontierError, Source};

/// The half-open spatial cube `center + [-side/2, side/2)^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialBox {
    pub center: Vec<f64>,
    pub side: f64,
}

impl SpatialBox {
    pub fn new(center: &[f64], side: f64) -> Self {
        SpatialBox {
            center: center.to_vec(),
            side,
        }
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.center
            .iter()
            .zip(x)
            .all(|(c, xi)| {
                let off = xi - c;
                off >= -self.side / 2.0 && off < self.side / 2.0
            })
    }
}

#[derive(Clone, Debug)]
pub struct ReachableSet {
    pub(crate) grid: GridSpec,
    pub(crate) block: Block,
    pub(crate) cells: Vec<bool>,
    pub time: f64,
    pub source: Source,
    pub threshold: f64,
    /// The absolute cut `threshold · max u` that produced the set.
    pub level: f64,
}

/// The cut `threshold · max u`. The exact solution keeps `max u = 1`; the
/// scheme lowers the peak slightly when the flow outruns the front, and
/// cutting relative to the peak keeps the front at the middle of its
/// profile.
pub fn front_level(state: &LevelSetState, threshold: f64) -> f64 {
    threshold * state.peak()
}

/// Cells with `u ≥ threshold · max u`; empty when `u ≡ 0`.
pub fn reachable_indicator(state: &LevelSetState, threshold: f64) -> Result<ReachableSet, FrontierError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(FrontierError::InvalidParameter {
            name: "threshold",
            value: threshold,
        });
    }
    let level = front_level(state, threshold);
    Ok(ReachableSet {
        grid: state.grid.clone(),
        block: state.block,
        cells: state.values.iter().map(|v| *v > 0.0 && *v >= level).collect(),
        time: state.time,
        source: state.source.clone(),
        threshold,
        level,
    })
}

impl ReachableSet {
    /// Builds a set from a dense row-major occupancy array.
    pub fn from_dense(
        grid: GridSpec,
        cells: &[bool],
        time: f64,
        source: Source,
        threshold: f64,
    ) -> Result<Self, FrontierError> {
        if cells.len() != grid.total_cells() {
            return Err(FrontierError::InvalidParameter {
                name: "cells.len",
                value: cells.len() as f64,
            });
        }
        Ok(ReachableSet {
            block: grid.full_block(),
            grid,
            cells: cells.to_vec(),
            time,
            source,
            threshold,
            level: threshold,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn padded(&self, g: &[i64]) -> Option<[usize; 3]> {
        let mut p = [0usize; 3];
        for (a, ga) in g.iter().enumerate() {
            if *ga < 0 || *ga >= self.grid.n as i64 {
                return None;
            }
            p[self.grid.internal_axis(a)] = *ga as usize;
        }
        Some(p)
    }

    fn set_padded(&self, p: [usize; 3]) -> bool {
        self.block.contains(p) && self.cells[self.block.index(p)]
    }

    /// Whether cell `g` (spatial axes in order) is in the set.
    pub fn is_set(&self, g: &[i64]) -> bool {
        self.padded(g).is_some_and(|p| self.set_padded(p))
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let full = self.grid.full_block();
        let mut out = vec![false; full.len()];
        self.block
            .for_each(|g| out[full.index(g)] = self.cells[self.block.index(g)]);
        out
    }

    /// Calls `f(point)` for every set cell center.
    pub fn for_each_set(&self, mut f: impl FnMut(&[f64])) {
        let dim = self.grid.dim;
        self.block.for_each(|g| {
            if self.cells[self.block.index(g)] {
                f(&self.grid.point_of(g)[..dim]);
            }
        });
    }

    /// Copies the set onto another grid with the same spacing whose cells
    /// line up with this one; cells outside this grid are unset.
    pub fn resample(&self, target: &GridSpec) -> Result<ReachableSet, FrontierError> {
        let dim = self.grid.dim;
        if target.dim != dim || (target.h - self.grid.h).abs() > 1e-12 * self.grid.h {
            return Err(FrontierError::GridMismatch);
        }
        let mut shift = [0i64; 3];
        for a in 0..dim {
            let s = (target.origin[a] - self.grid.origin[a]) / self.grid.h;
            if (s - s.round()).abs() > 1e-6 {
                return Err(FrontierError::GridMismatch);
            }
            shift[a] = s.round() as i64;
        }
        let full = target.full_block();
        let mut cells = vec![false; full.len()];
        full.for_each(|g| {
            let src: Vec<i64> = (0..dim)
                .map(|a| g[target.internal_axis(a)] as i64 + shift[a])
                .collect();
            cells[full.index(g)] = self.is_set(&src);
        });
        let mut out = ReachableSet::from_dense(target.clone(), &cells, self.time, self.source.clone(), self.threshold)?;
        out.level = self.level;
        Ok(out)
    }

    /// Majority vote onto a coarser grid whose spacing is an integer
    /// multiple `factor` of this one and whose cell faces lie on this grid's
    /// faces. A coarse cell is set when at least half of its sub-cells are.
    pub fn coarsen(&self, target: &GridSpec) -> Result<ReachableSet, FrontierError> {
        let dim = self.grid.dim;
        let ratio = target.h / self.grid.h;
        let factor = ratio.round() as i64;
        if target.dim != dim || factor < 1 || (ratio - factor as f64).abs() > 1e-9 * ratio {
            return Err(FrontierError::GridMismatch);
        }
        let mut shift = [0i64; 3];
        for a in 0..dim {
            let s = (target.origin[a] - self.grid.origin[a]) / self.grid.h;
            if (s - s.round()).abs() > 1e-6 {
                return Err(FrontierError::GridMismatch);
            }
            shift[a] = s.round() as i64;
        }
        let per_cell = factor.pow(dim as u32) as usize;
        let full = target.full_block();
        let mut cells = vec![false; full.len()];
        let mut sub = vec![0i64; dim];
        full.for_each(|g| {
            let mut count = 0usize;
            for off in 0..per_cell {
                let mut rem = off as i64;
                for a in 0..dim {
                    sub[a] = g[target.internal_axis(a)] as i64 * factor + shift[a] + rem % factor;
                    rem /= factor;
                }
                if self.is_set(&sub) {
                    count += 1;
                }
            }
            cells[full.index(g)] = 2 * count >= per_cell;
        });
        let mut out = ReachableSet::from_dense(target.clone(), &cells, self.time, self.source.clone(), self.threshold)?;
        out.level = self.level;
        Ok(out)
    }

    pub fn source_cell_set(&self) -> bool {
        let g: Vec<i64> = (0..self.grid.dim)
            .map(|a| self.grid.cell_of(a, self.source.x0[a]))
            .collect();
        self.is_set(&g)
    }
}

/// Cell count times `h^d`, restricted to cells whose centers lie in the
/// window when one is given.
pub fn volume(rs: &ReachableSet, window: Option<&SpatialBox>) -> f64 {
    let mut count = 0usize;
    match window {
        None => count = rs.count(),
        Some(w) => rs.for_each_set(|x| {
            if w.contains(x) {
                count += 1;
            }
        }),
    }
    count as f64 * rs.grid.cell_volume()
}

/// Factor mapping the Manhattan perimeter of a ball to its true perimeter:
/// `1 / (d · E|n_1|)` for a uniform unit normal.
pub fn perimeter_correction(dim: usize) -> f64 {
    match dim {
        2 => std::f64::consts::PI / 4.0,
        _ => 2.0 / 3.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerimeterEstimate {
    pub facets: usize,
    /// `facets · h^(d-1)`
    pub manhattan: f64,
    pub corrected: f64,
}

/// Counts faces between set and unset neighbors whose two cell centers
/// both lie in the window.
pub fn perimeter_estimate(rs: &ReachableSet, window: Option<&SpatialBox>) -> PerimeterEstimate {
    let dim = rs.grid.dim;
    let n = rs.grid.n;
    let b = rs.block;
    let strides = b.strides();
    let mut facets = 0usize;
    let inside = |g: [usize; 3]| match window {
        None => true,
        Some(w) => w.contains(&rs.grid.point_of(g)[..dim]),
    };
    for ia in (3 - dim)..3 {
        b.for_each(|g| {
            let here = rs.cells[b.index(g)];
            // the neighbor above, which may lie outside the block
            let up = if g[ia] + 1 < b.hi(ia) {
                rs.cells[b.index(g) + strides[ia]]
            } else {
                false
            };
            if here != up && g[ia] + 1 < n {
                let mut gu = g;
                gu[ia] += 1;
                if inside(g) && inside(gu) {
                    facets += 1;
                }
            }
            if g[ia] == b.lo[ia] && here && g[ia] > 0 {
                let mut gd = g;
                gd[ia] -= 1;
                if inside(g) && inside(gd) {
                    facets += 1;
                }
            }
        });
    }
    let manhattan = facets as f64 * rs.grid.h.powi(dim as i32 - 1);
    PerimeterEstimate {
        facets,
        manhattan,
        corrected: manhattan * perimeter_correction(dim),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from `x0` to the nearest unset cell center; 0 if the cell
/// containing `x0` is unset.
pub fn inscribed_ball_radius(rs: &ReachableSet, x0: &[f64]) -> f64 {
    let dim = rs.grid.dim;
    let g0: Vec<i64> = (0..dim).map(|a| rs.grid.cell_of(a, x0[a])).collect();
    if !rs.is_set(&g0) {
        return 0.0;
    }
    // Cells outside the stored block are unset; the nearest of them is no
    // closer than the first layer past each face of the block.
    let mut best = f64::INFINITY;
    for a in 0..dim {
        let ia = rs.grid.internal_axis(a);
        let lo = rs.block.lo[ia] as i64 - 1;
        let hi = rs.block.hi(ia) as i64;
        if lo >= 0 {
            best = best.min((x0[a] - rs.grid.center(a, lo)).abs());
        }
        if hi < rs.grid.n as i64 {
            best = best.min((rs.grid.center(a, hi) - x0[a]).abs());
        }
    }
    rs.block.for_each(|g| {
        if !rs.cells[rs.block.index(g)] {
            best = best.min(dist(&rs.grid.point_of(g)[..dim], x0));
        }
    });
    if best.is_finite() {
        best
    } else {
        // Everything is set: the grid itself is the limit.
        (0..dim)
            .map(|a| {
                let lo = rs.grid.origin[a];
                (x0[a] - lo).min(lo + rs.grid.side() - x0[a])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Largest distance from `x0` to a set cell center (0 for the empty set).
pub fn max_extent(rs: &ReachableSet, x0: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    rs.for_each_set(|x| best = best.max(dist(x, x0)));
    best
}

/// `(|A Δ B|, |A ∪ B|)` for two sets on the same grid.
pub fn symmetric_difference(a: &ReachableSet, b: &ReachableSet) -> Result<(f64, f64), FrontierError> {
    if a.grid != b.grid {
        return Err(FrontierError::GridMismatch);
    }
    let region = a.block.union(&b.block);
    let (mut diff, mut union) = (0usize, 0usize);
    region.for_each(|g| {
        let (x, y) = (a.set_padded(g), b.set_padded(g));
        if x != y {
            diff += 1;
        }
        if x || y {
            union += 1;
        }
    });
    let cv = a.grid.cell_volume();
    Ok((diff as f64 * cv, union as f64 * cv))
}

/// Number of cells of `earlier` that are not within one cell (in the
/// max-norm) of a cell of `later`.
pub fn nesting_defect(earlier: &ReachableSet, later: &ReachableSet) -> Result<usize, FrontierError> {
    if earlier.grid != later.grid {
        return Err(FrontierError::GridMismatch);
    }
    let dim = earlier.grid.dim;
    let mut bad = 0;
    earlier.block.for_each(|g| {
        if !earlier.cells[earlier.block.index(g)] {
            return;
        }
        let base: Vec<i64> = (0..dim)
            .map(|a| g[earlier.grid.internal_axis(a)] as i64)
            .collect();
        let mut found = false;
        for off in 0..3usize.pow(dim as u32) {
            let mut rem = off;
            let q: Vec<i64> = base
                .iter()
                .map(|b| {
                    let d = (rem % 3) as i64 - 1;
                    rem /= 3;
                    b + d
                })
                .collect();
            if later.is_set(&q) {
                found = true;
                break;
            }
        }
        if !found {
            bad += 1;
        }
    });
    Ok(bad)
}

/// Points where `u - level` changes sign along a grid edge, located by
/// linear interpolation.
pub fn level_crossings(state: &LevelSetState, level: f64) -> Vec<Vec<f64>> {
    let grid = &state.grid;
    let dim = grid.dim;
    let b = state.block;
    let strides = b.strides();
    let mut out = Vec::new();
    for a in 0..dim {
        let ia = grid.internal_axis(a);
        b.for_each(|g| {
            if g[ia] + 1 >= b.hi(ia) {
                return;
            }
            let i = b.index(g);
            let (u0, u1) = (state.values[i], state.values[i + strides[ia]]);
            if (u0 >= level) != (u1 >= level) {
                let s = (level - u0) / (u1 - u0);
                let mut x = grid.point_of(g)[..dim].to_vec();
                x[a] += s * grid.h;
                out.push(x);
            }
        });
    }
    out
}

/// Hausdorff distance between a finite point set and the sphere
/// `|x - center| = radius`, with the sphere sampled at `samples` points
/// (d = 2) or `samples²` points (d = 3).
pub fn hausdorff_to_sphere(points: &[Vec<f64>], center: &[f64], radius: f64, samples: usize) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let to_sphere = points
        .iter()
        .map(|p| (dist(p, center) - radius).abs())
        .fold(0.0, f64::max);
    let dim = center.len();
    let mut sphere = Vec::new();
    if dim == 2 {
        for i in 0..samples {
            let th = std::f64::consts::TAU * i as f64 / samples as f64;
            sphere.push(vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]);
        }
    } else {
        for i in 0..samples {
            let z = -1.0 + 2.0 * (i as f64 + 0.5) / samples as f64;
            let rr = (1.0 - z * z).sqrt();
            for j in 0..samples {
                let th = std::f64::consts::TAU * j as f64 / samples as f64;
                sphere.push(vec![
                    center[0] + radius * rr * th.cos(),
                    center[1] + radius * rr * th.sin(),
                    center[2] + radius * z,
                ]);
            }
        }
    }
    let from_sphere = sphere
        .iter()
        .map(|s| points.iter().map(|p| dist(p, s)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    to_sphere.max(from_sphere)
}
