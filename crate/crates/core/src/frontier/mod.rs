//! Front propagation for `u_t = A|∇u| - V·∇u` from a point source and the
//! measurements taken on the resulting reachable sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod grid;
pub mod level_set;
pub mod oracle;
pub mod reachable;
pub mod snapshot;
pub mod waiting;

pub use grid::{required_side, GridSpec};
pub use level_set::{
    bump_profile, check_no_wraparound, evolve, init_point_source, step, LevelSetState, SchemeParams, Stepper,
    FLUSH_THRESHOLD,
};
pub use oracle::{trajectory_oracle, trajectory_oracle_with, OracleSettings};
pub use reachable::{
    front_level, hausdorff_to_sphere, inscribed_ball_radius, level_crossings, max_extent, nesting_defect, perimeter_estimate,
    reachable_indicator, symmetric_difference, volume, PerimeterEstimate, ReachableSet, SpatialBox,
};
pub use waiting::{
    trace_reachable, trace_with, waiting_time, FrontSettings, DEFAULT_DELTA_CELLS, FrontTrace, Violation, WaitingOutcome,
    WaitingTimeRecord, WaitingTimeSpec,
};

/// Space-time origin `(t0, x0)` of a front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub t0: f64,
    pub x0: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("cfl_safety {value} outside (0, {max}]")]
    CflSafety { value: f64, max: f64 },
    #[error("time step {dt} exceeds the stable limit {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },
    #[error("bump radius {delta} is below 2h = {}", 2.0 * h)]
    BumpTooNarrow { delta: f64, h: f64 },
    #[error("front reached the grid boundary at t = {time}")]
    FrontReachedBoundary { time: f64 },
    #[error("grid side {side} is below the no-wraparound bound {required}")]
    GridTooSmall { side: f64, required: f64 },
    #[error("states live on different grids")]
    GridMismatch,
    #[error("cannot evolve backwards from {from} to {to}")]
    TimeReversed { from: f64, to: f64 },
    #[error("snapshot times are not sorted")]
    UnsortedSnapshots,
    #[error("snapshot time {time} outside [{start}, {end}]")]
    SnapshotOutOfRange { time: f64, start: f64, end: f64 },
    #[error("oracle grid has {cells} cells, above the cap {cap}")]
    OracleCap { cells: usize, cap: usize },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
