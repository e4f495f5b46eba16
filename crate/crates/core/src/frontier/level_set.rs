//! The monotone upwind scheme for `u_t = A|∇u| - V·∇u`.
//!
//! Values are stored only on a window around the support of `u`; cells
//! outside it are zero. Each step touches the support's bounding box
//! grown by one cell.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{required_side, Block, GridSpec};
use super::{FrontierError, Source};
use crate::field::VelocityField;

/// Values below this are flushed to zero after each step, which keeps the
/// support from creeping outward by one cell per step.
pub const FLUSH_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Laminar speed A.
    pub laminar_speed: f64,
    pub cfl_safety: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            laminar_speed: 1.0,
            cfl_safety: 0.5,
        }
    }
}

impl SchemeParams {
    pub fn with_cfl(cfl_safety: f64) -> Self {
        SchemeParams {
            cfl_safety,
            ..Self::default()
        }
    }
}

impl SchemeParams {
    pub fn validate(&self, dim: usize) -> Result<(), FrontierError> {
        if !(self.laminar_speed > 0.0) || !self.laminar_speed.is_finite() {
            return Err(FrontierError::InvalidParameter {
                name: "laminar_speed",
                value: self.laminar_speed,
            });
        }
        let cap = 1.0 / (dim as f64).sqrt();
        if !(self.cfl_safety > 0.0) || self.cfl_safety > cap {
            return Err(FrontierError::CflSafety {
                value: self.cfl_safety,
                max: cap,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LevelSetState {
    pub(crate) grid: GridSpec,
    pub(crate) time: f64,
    pub(crate) source: Source,
    pub(crate) scheme: SchemeParams,
    pub(crate) delta: f64,
    pub(crate) block: Block,
    pub(crate) values: Vec<f64>,
    pub(crate) support: Option<Block>,
}

/// `½ (1 + cos(π ρ / δ))` inside the ball, zero outside.
pub fn bump_profile(rho: f64, delta: f64) -> f64 {
    if rho >= delta {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * rho / delta).cos())
    }
}

/// Point-source initial data with the default scheme parameters.
pub fn init_point_source(grid: &GridSpec, x0: &[f64], delta: f64, t0: f64) -> Result<LevelSetState, FrontierError> {
    LevelSetState::point_source(
        grid.clone(),
        Source {
            t0,
            x0: x0.to_vec(),
        },
        delta,
        SchemeParams::default(),
    )
}

impl LevelSetState {
    pub fn point_source(
        grid: GridSpec,
        source: Source,
        delta: f64,
        scheme: SchemeParams,
    ) -> Result<Self, FrontierError> {
        scheme.validate(grid.dim)?;
        if source.x0.len() != grid.dim {
            return Err(FrontierError::DimensionMismatch {
                expected: grid.dim,
                got: source.x0.len(),
            });
        }
        if !(delta >= 2.0 * grid.h) {
            return Err(FrontierError::BumpTooNarrow { delta, h: grid.h });
        }
        let mut cells = grid.full_block();
        for a in 0..grid.dim {
            let ia = grid.internal_axis(a);
            let lo = grid.cell_of(a, source.x0[a] - delta) - 1;
            let hi = grid.cell_of(a, source.x0[a] + delta) + 2;
            if lo < 2 || hi + 2 > grid.n as i64 {
                return Err(FrontierError::FrontReachedBoundary { time: source.t0 });
            }
            cells.lo[ia] = lo as usize;
            cells.shape[ia] = (hi - lo) as usize;
        }
        let mut values = vec![0.0; cells.len()];
        let mut support: Option<Block> = None;
        cells.for_each(|g| {
            let x = grid.point_of(g);
            let rho = (0..grid.dim)
                .map(|a| (x[a] - source.x0[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            let v = bump_profile(rho, delta);
            if v > 0.0 {
                values[cells.index(g)] = v;
                support = Some(extend(support, g));
            }
        });
        let mut state = LevelSetState {
            grid,
            time: source.t0,
            source,
            scheme,
            delta,
            block: cells,
            values,
            support,
        };
        state.ensure_capacity()?;
        Ok(state)
    }

    /// Builds a state from a dense array over the whole grid (row-major).
    pub fn from_dense(
        grid: GridSpec,
        values: &[f64],
        time: f64,
        source: Source,
        delta: f64,
        scheme: SchemeParams,
    ) -> Result<Self, FrontierError> {
        scheme.validate(grid.dim)?;
        if values.len() != grid.total_cells() {
            return Err(FrontierError::InvalidParameter {
                name: "values.len",
                value: values.len() as f64,
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FrontierError::InvalidParameter {
                name: "value range",
                value: f64::NAN,
            });
        }
        let block = grid.full_block();
        let mut support = None;
        block.for_each(|g| {
            if values[block.index(g)] > 0.0 {
                support = Some(extend(support, g));
            }
        });
        let mut state = LevelSetState {
            grid,
            time,
            source,
            scheme,
            delta,
            block,
            values: values.to_vec(),
            support,
        };
        state.ensure_capacity()?;
        Ok(state)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn scheme(&self) -> SchemeParams {
        self.scheme
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Value at a grid index (spatial axes in order).
    pub fn value(&self, g: &[usize]) -> f64 {
        let mut p = [0usize; 3];
        for (a, ga) in g.iter().enumerate() {
            p[self.grid.internal_axis(a)] = *ga;
        }
        if self.block.contains(p) {
            self.values[self.block.index(p)]
        } else {
            0.0
        }
    }

    /// The full grid array in row-major order.
    pub fn to_dense(&self) -> Vec<f64> {
        let full = self.grid.full_block();
        let mut out = vec![0.0; full.len()];
        self.block.for_each(|g| out[full.index(g)] = self.values[self.block.index(g)]);
        out
    }

    /// Largest grid value.
    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 0.0;
        for v in &self.values {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    /// Largest stable step: `cfl_safety · h / (A √d + M)`.
    pub fn max_dt(&self, field: &VelocityField) -> f64 {
        self.scheme.cfl_safety * self.grid.h
            / (self.scheme.laminar_speed * (self.grid.dim as f64).sqrt() + field.amplitude_bound())
    }

    fn ensure_capacity(&mut self) -> Result<(), FrontierError> {
        let Some(sup) = self.support else {
            return Ok(());
        };
        let (dim, n) = (self.grid.dim, self.grid.n);
        let need = sup
            .expanded(2, dim, n)
            .ok_or(FrontierError::FrontReachedBoundary { time: self.time })?;
        if self.block.contains_block(&need) {
            return Ok(());
        }
        let extent = (3 - dim..3).map(|a| sup.shape[a]).max().unwrap_or(1);
        let margin = (extent / 4).max(8);
        let new_block = sup.expanded_clipped(2 + margin, dim, n).union(&need);
        let mut values = vec![0.0; new_block.len()];
        let old = self.block;
        old.for_each(|g| {
            if new_block.contains(g) {
                values[new_block.index(g)] = self.values[old.index(g)];
            }
        });
        self.block = new_block;
        self.values = values;
        Ok(())
    }
}

fn extend(b: Option<Block>, g: [usize; 3]) -> Block {
    match b {
        None => Block { lo: g, shape: [1; 3] },
        Some(b) => b.union(&Block { lo: g, shape: [1; 3] }),
    }
}

#[derive(Clone, Copy)]
struct WaveRow {
    omega: f64,
    phase: f64,
    /// Velocity amplitude per padded axis.
    velocity: [f64; 3],
}

/// Reusable workspace for stepping states on one grid with one field.
pub struct Stepper<'f> {
    field: &'f VelocityField,
    grid: GridSpec,
    waves: Vec<WaveRow>,
    mean: [f64; 3],
    /// Per padded axis: `e^{i 2π k_a x_g}` laid out as `[wave * n + g]`.
    tables: [Vec<Complex64>; 3],
    scratch: Vec<f64>,
    scratch_block: Option<Block>,
    dirty: Option<Block>,
}

struct RowBuffers {
    v: [Vec<f64>; 3],
}

impl<'f> Stepper<'f> {
    pub fn new(field: &'f VelocityField, grid: &GridSpec) -> Result<Self, FrontierError> {
        if field.dim() != grid.dim {
            return Err(FrontierError::DimensionMismatch {
                expected: grid.dim,
                got: field.dim(),
            });
        }
        let dim = grid.dim;
        let n = grid.n;
        let mut mean = [0.0; 3];
        for a in 0..dim {
            mean[grid.internal_axis(a)] = field.mean()[a];
        }
        let waves: Vec<WaveRow> = field
            .waves()
            .iter()
            .map(|w| {
                let mut velocity = [0.0; 3];
                for a in 0..dim {
                    velocity[grid.internal_axis(a)] = w.velocity[a];
                }
                WaveRow {
                    omega: w.omega,
                    phase: w.phase,
                    velocity,
                }
            })
            .collect();
        let mut tables: [Vec<Complex64>; 3] = Default::default();
        for a in 0..dim {
            let ia = grid.internal_axis(a);
            let mut t = Vec::with_capacity(waves.len() * n);
            for w in field.waves() {
                for g in 0..n {
                    t.push(Complex64::from_polar(1.0, w.k[a] * grid.center(a, g as i64)));
                }
            }
            tables[ia] = t;
        }
        Ok(Stepper {
            field,
            grid: grid.clone(),
            waves,
            mean,
            tables,
            scratch: Vec::new(),
            scratch_block: None,
            dirty: None,
        })
    }

    pub fn field(&self) -> &VelocityField {
        self.field
    }

    /// One forward Euler step of size `dt`.
    pub fn step(&mut self, state: &mut LevelSetState, dt: f64) -> Result<(), FrontierError> {
        if state.grid != self.grid {
            return Err(FrontierError::GridMismatch);
        }
        let max_dt = state.max_dt(self.field);
        if !(dt >= 0.0) || dt > max_dt * (1.0 + 1e-12) {
            return Err(FrontierError::CflViolation { dt, max_dt });
        }
        state.ensure_capacity()?;
        let Some(support) = state.support else {
            state.time += dt;
            return Ok(());
        };
        let (dim, n) = (self.grid.dim, self.grid.n);
        let region = support
            .expanded(1, dim, n)
            .ok_or(FrontierError::FrontReachedBoundary { time: state.time })?;
        let block = state.block;
        if self.scratch_block != Some(block) {
            self.scratch = vec![0.0; block.len()];
            self.scratch_block = Some(block);
            self.dirty = None;
        }

        let row_len = block.shape[2];
        let dirty = self.dirty;
        let mut scratch = std::mem::take(&mut self.scratch);
        let ctx = RowContext {
            stepper: self,
            block,
            region,
            t: state.time,
            dt,
            u: &state.values,
            a: state.scheme.laminar_speed,
            h: self.grid.h,
        };
        let row_support: Vec<Option<(usize, usize, usize, usize)>> = scratch
            .par_chunks_mut(row_len)
            .enumerate()
            .map_init(
                || RowBuffers {
                    v: [vec![0.0; row_len], vec![0.0; row_len], vec![0.0; row_len]],
                },
                |buf, (r, out)| {
                    let i = block.lo[0] + r / block.shape[1];
                    let j = block.lo[1] + r % block.shape[1];
                    if let Some(d) = dirty {
                        if (d.lo[0]..d.hi(0)).contains(&i) && (d.lo[1]..d.hi(1)).contains(&j) {
                            let off = d.lo[2] - block.lo[2];
                            out[off..off + d.shape[2]].fill(0.0);
                        }
                    }
                    if (region.lo[0]..region.hi(0)).contains(&i) && (region.lo[1]..region.hi(1)).contains(&j) {
                        ctx.row(i, j, out, buf).map(|(k0, k1)| (i, j, k0, k1))
                    } else {
                        None
                    }
                },
            )
            .collect();
        let mut new_support: Option<Block> = None;
        for (i, j, k0, k1) in row_support.into_iter().flatten() {
            new_support = Some(extend(new_support, [i, j, k0]).union(&Block {
                lo: [i, j, k1],
                shape: [1; 3],
            }));
        }
        std::mem::swap(&mut state.values, &mut scratch);
        self.scratch = scratch;
        self.dirty = Some(region);
        state.support = new_support;
        state.time += dt;
        Ok(())
    }

    /// Steps until `state.time == target`, shortening the last steps so the
    /// target is hit exactly.
    pub fn advance_to(&mut self, state: &mut LevelSetState, target: f64) -> Result<(), FrontierError> {
        if target < state.time {
            return Err(FrontierError::TimeReversed {
                from: state.time,
                to: target,
            });
        }
        let dt_max = state.max_dt(self.field);
        while state.time < target {
            let remaining = target - state.time;
            let dt = if remaining <= dt_max {
                remaining
            } else if remaining < 2.0 * dt_max {
                remaining / 2.0
            } else {
                dt_max
            };
            self.step(state, dt)?;
            if dt == remaining {
                break;
            }
        }
        state.time = target;
        Ok(())
    }
}

struct RowContext<'a, 'f> {
    stepper: &'a Stepper<'f>,
    block: Block,
    region: Block,
    t: f64,
    dt: f64,
    u: &'a [f64],
    a: f64,
    h: f64,
}

impl RowContext<'_, '_> {
    /// Updates cells `(i, j, region k-range)` into `out` (a full block row)
    /// and returns the first and last k with a positive result.
    fn row(&self, i: usize, j: usize, out: &mut [f64], buf: &mut RowBuffers) -> Option<(usize, usize)> {
        let st = self.stepper;
        let dim = st.grid.dim;
        let n = st.grid.n;
        let (k0, k1) = (self.region.lo[2], self.region.hi(2));
        let len = k1 - k0;
        for ia in 0..3 {
            buf.v[ia][..len].fill(st.mean[ia]);
        }
        for (w, wave) in st.waves.iter().enumerate() {
            let mut base = Complex64::from_polar(1.0, wave.omega * self.t + wave.phase);
            if dim == 3 {
                base *= st.tables[0][w * n + i];
            }
            base *= st.tables[1][w * n + j];
            let row = &st.tables[2][w * n + k0..w * n + k1];
            let [vx, vy, vz] = wave.velocity;
            let [b0, b1, b2] = &mut buf.v;
            for (idx, tk) in row.iter().enumerate() {
                let s = base.re * tk.im + base.im * tk.re;
                b0[idx] += vx * s;
                b1[idx] += vy * s;
                b2[idx] += vz * s;
            }
        }

        let strides = self.block.strides();
        let first_axis = 3 - dim;
        let inv_h = 1.0 / self.h;
        let mut first = None;
        let mut last = 0;
        let row_base = self.block.index([i, j, self.block.lo[2]]);
        for k in k0..k1 {
            let off = k - self.block.lo[2];
            let idx = row_base + off;
            let uc = self.u[idx];
            let mut grad2 = 0.0;
            let mut adv = 0.0;
            for ia in first_axis..3 {
                let s = strides[ia];
                let um = self.u[idx - s];
                let up = self.u[idx + s];
                let g = (um - uc).max(up - uc).max(0.0);
                grad2 += g * g;
                let v = buf.v[ia][k - k0];
                let upwind = if v > 0.0 { um } else { up };
                adv += v.abs() * (upwind - uc);
            }
            let mut next = uc + self.dt * inv_h * (self.a * grad2.sqrt() + adv);
            if next < FLUSH_THRESHOLD {
                next = 0.0;
            } else if next > 1.0 {
                next = 1.0;
            }
            out[off] = next;
            if next > 0.0 {
                if first.is_none() {
                    first = Some(k);
                }
                last = k;
            }
        }
        first.map(|f| (f, last))
    }
}

/// One step with a throwaway workspace.
pub fn step(state: &LevelSetState, field: &VelocityField, dt: f64) -> Result<LevelSetState, FrontierError> {
    let mut next = state.clone();
    Stepper::new(field, &state.grid)?.step(&mut next, dt)?;
    Ok(next)
}

/// Advances to `t_final`, returning the state at each snapshot time
/// followed by the state at `t_final`.
pub fn evolve(
    state: &LevelSetState,
    field: &VelocityField,
    t_final: f64,
    snapshot_times: &[f64],
) -> Result<Vec<LevelSetState>, FrontierError> {
    if t_final < state.time {
        return Err(FrontierError::TimeReversed {
            from: state.time,
            to: t_final,
        });
    }
    check_no_wraparound(state, field, t_final)?;
    let mut times = snapshot_times.to_vec();
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(FrontierError::UnsortedSnapshots);
        }
    }
    if let Some(bad) = times.iter().find(|t| **t < state.time || **t > t_final) {
        return Err(FrontierError::SnapshotOutOfRange {
            time: *bad,
            start: state.time,
            end: t_final,
        });
    }
    times.push(t_final);
    let mut stepper = Stepper::new(field, &state.grid)?;
    let mut current = state.clone();
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        stepper.advance_to(&mut current, t)?;
        out.push(current.clone());
    }
    Ok(out)
}

pub fn check_no_wraparound(state: &LevelSetState, field: &VelocityField, t_final: f64) -> Result<(), FrontierError> {
    let speed = state.scheme.laminar_speed + field.amplitude_bound();
    let need = required_side(speed, t_final - state.source.t0, state.delta);
    if state.grid.side() < need {
        return Err(FrontierError::GridTooSmall {
            side: state.grid.side(),
            required: need,
        });
    }
    Ok(())
}
