//! Brute-force reachable sets from controlled trajectories
//! `Ẋ = V(t, X) + α`, `|α| = A`.
//!
//! A cloud of trajectory endpoints is advanced one substep at a time under
//! every discretized control and thinned to one point per cell of a lattice
//! `refine` times finer than the output grid. A grid cell is reported as set
//! when at least half of its fine sub-cells hold a point.

use std::collections::BTreeMap;

use super::grid::GridSpec;
use super::reachable::ReachableSet;
use super::{FrontierError, Source};
use crate::field::VelocityField;

/// Largest number of grid cells the oracle accepts, per dimension.
pub fn oracle_cap(dim: usize) -> usize {
    128usize.pow(dim as u32)
}

pub const DEFAULT_REFINE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSettings {
    pub laminar_speed: f64,
    pub n_controls: usize,
    pub n_substeps: usize,
    pub refine: usize,
}

/// Unit control directions: equally spaced on the circle, or a Fibonacci
/// lattice on the sphere.
pub fn control_directions(dim: usize, n: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n);
    if dim == 2 {
        for j in 0..n {
            let th = std::f64::consts::TAU * (j as f64 + 0.5) / n as f64;
            out.push([th.cos(), th.sin(), 0.0]);
        }
    } else {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for j in 0..n {
            let z = 1.0 - 2.0 * (j as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * j as f64;
            out.push([r * th.cos(), r * th.sin(), z]);
        }
    }
    out
}

/// [`trajectory_oracle_with`] with `A = 1` and the default refinement.
pub fn trajectory_oracle(
    field: &VelocityField,
    source: &Source,
    t: f64,
    n_controls: usize,
    n_substeps: usize,
    grid: &GridSpec,
) -> Result<ReachableSet, FrontierError> {
    trajectory_oracle_with(
        field,
        source,
        t,
        grid,
        &OracleSettings {
            laminar_speed: 1.0,
            n_controls,
            n_substeps,
            refine: DEFAULT_REFINE,
        },
    )
}

pub fn trajectory_oracle_with(
    field: &VelocityField,
    source: &Source,
    t: f64,
    grid: &GridSpec,
    settings: &OracleSettings,
) -> Result<ReachableSet, FrontierError> {
    let dim = grid.dim;
    if field.dim() != dim || source.x0.len() != dim {
        return Err(FrontierError::DimensionMismatch {
            expected: dim,
            got: if field.dim() != dim { field.dim() } else { source.x0.len() },
        });
    }
    let cap = oracle_cap(dim);
    if grid.total_cells() > cap {
        return Err(FrontierError::OracleCap {
            cells: grid.total_cells(),
            cap,
        });
    }
    if t < source.t0 {
        return Err(FrontierError::TimeReversed { from: source.t0, to: t });
    }
    for (name, v) in [
        ("n_controls", settings.n_controls),
        ("n_substeps", settings.n_substeps),
        ("refine", settings.refine),
    ] {
        if v == 0 {
            return Err(FrontierError::InvalidParameter { name, value: 0.0 });
        }
    }
    if !(settings.laminar_speed > 0.0) {
        return Err(FrontierError::InvalidParameter {
            name: "laminar_speed",
            value: settings.laminar_speed,
        });
    }

    let eta = grid.h / settings.refine as f64;
    let fine_n = (grid.n * settings.refine) as i64;
    let key = |x: &[f64; 3]| -> Option<[i64; 3]> {
        let mut k = [0i64; 3];
        for a in 0..dim {
            let g = ((x[a] - grid.origin[a]) / eta).floor() as i64;
            if g < 0 || g >= fine_n {
                return None;
            }
            k[a] = g;
        }
        Some(k)
    };
    let controls: Vec<[f64; 3]> = control_directions(dim, settings.n_controls)
        .into_iter()
        .map(|u| u.map(|c| c * settings.laminar_speed))
        .collect();

    let mut x0 = [0.0; 3];
    x0[..dim].copy_from_slice(&source.x0);
    let mut cloud: BTreeMap<[i64; 3], [f64; 3]> = BTreeMap::new();
    if let Some(k) = key(&x0) {
        cloud.insert(k, x0);
    }
    let dt = (t - source.t0) / settings.n_substeps as f64;
    if dt > 0.0 {
        for s in 0..settings.n_substeps {
            let tau = source.t0 + s as f64 * dt;
            let mut next: BTreeMap<[i64; 3], [f64; 3]> = BTreeMap::new();
            for p in cloud.values() {
                let v0 = field.eval(tau, &p[..dim]);
                for alpha in &controls {
                    let mut mid = *p;
                    for a in 0..dim {
                        mid[a] += 0.5 * dt * (v0[a] + alpha[a]);
                    }
                    let vm = field.eval(tau + 0.5 * dt, &mid[..dim]);
                    let mut q = *p;
                    for a in 0..dim {
                        q[a] += dt * (vm[a] + alpha[a]);
                    }
                    if let Some(k) = key(&q) {
                        next.entry(k)
                            .and_modify(|old| {
                                if center_dist2(k, old, grid, eta, dim) > center_dist2(k, &q, grid, eta, dim) {
                                    *old = q;
                                }
                            })
                            .or_insert(q);
                    }
                }
            }
            cloud = next;
        }
    }

    let per_cell = settings.refine.pow(dim as u32);
    let mut counts = vec![0usize; grid.total_cells()];
    for k in cloud.keys() {
        let mut idx = 0;
        for a in 0..dim {
            idx = idx * grid.n + (k[a] as usize) / settings.refine;
        }
        counts[idx] += 1;
    }
    let cells: Vec<bool> = counts.iter().map(|c| 2 * c >= per_cell).collect();
    ReachableSet::from_dense(grid.clone(), &cells, t, source.clone(), 0.5)
}

fn center_dist2(k: [i64; 3], x: &[f64; 3], grid: &GridSpec, eta: f64, dim: usize) -> f64 {
    (0..dim)
        .map(|a| {
            let c = grid.origin[a] + (k[a] as f64 + 0.5) * eta;
            (x[a] - c).powi(2)
        })
        .sum()
}
