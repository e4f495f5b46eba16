//! Waiting times and the per-sample diagnostics of a front evolution.

use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::level_set::{check_no_wraparound, LevelSetState, SchemeParams, Stepper};
use super::reachable::{
    inscribed_ball_radius, max_extent, nesting_defect, perimeter_estimate, reachable_indicator,
    symmetric_difference, volume, ReachableSet, SpatialBox,
};
use super::{FrontierError, Source};
use crate::field::VelocityField;
use crate::theory::unit_ball_volume;

/// Default bump radius in grid cells.
pub const DEFAULT_DELTA_CELLS: f64 = 4.0;

/// Numerical settings shared by every front evolution in a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSettings {
    pub h: f64,
    /// Initial bump radius; defaults to `4h`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub scheme: SchemeParams,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl FrontSettings {
    pub fn with_h(h: f64) -> Self {
        FrontSettings {
            h,
            delta: None,
            scheme: SchemeParams::default(),
            threshold: 0.5,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(DEFAULT_DELTA_CELLS * self.h)
    }
}

/// Diagnostics sampled at `n_samples + 1` equally spaced times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub dim: usize,
    pub h: f64,
    pub delta: f64,
    pub laminar_speed: f64,
    pub amplitude_bound: f64,
    pub source: Source,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub volume: Vec<f64>,
    pub inscribed_radius: Vec<f64>,
    pub max_extent: Vec<f64>,
    pub perimeter: Vec<f64>,
    /// `|R_{t_k} Δ R_{t_{k-1}}|`, zero at the first sample.
    pub symmetric_change: Vec<f64>,
    /// Cells of `R_{t_{k-1}}` not within one cell of `R_{t_k}`.
    pub nesting_defect: Vec<usize>,
    pub source_cell_set: Vec<bool>,
    pub box_sides: Vec<f64>,
    /// `box_volumes[i][k] = |Box_{box_sides[i]}(x0) ∩ R_{t_k}|`
    pub box_volumes: Vec<Vec<f64>>,
}

/// Evolves from a point source and records diagnostics at each sample time.
pub fn trace_reachable(
    field: &VelocityField,
    source: &Source,
    horizon: f64,
    n_samples: usize,
    settings: &FrontSettings,
    box_sides: &[f64],
) -> Result<FrontTrace, FrontierError> {
    trace_with(field, source, horizon, n_samples, settings, box_sides, |_, _| Ok(()))
}

/// Like [`trace_reachable`], also handing every sampled state and set to
/// `visit`.
#[allow(clippy::too_many_arguments)]
pub fn trace_with(
    field: &VelocityField,
    source: &Source,
    horizon: f64,
    n_samples: usize,
    settings: &FrontSettings,
    box_sides: &[f64],
    mut visit: impl FnMut(&LevelSetState, &ReachableSet) -> Result<(), FrontierError>,
) -> Result<FrontTrace, FrontierError> {
    if !(horizon > 0.0) {
        return Err(FrontierError::InvalidParameter {
            name: "horizon",
            value: horizon,
        });
    }
    if n_samples == 0 {
        return Err(FrontierError::InvalidParameter {
            name: "n_samples",
            value: 0.0,
        });
    }
    let dim = field.dim();
    let delta = settings.delta();
    let speed = settings.scheme.laminar_speed + field.amplitude_bound();
    let grid = GridSpec::for_horizon(dim, settings.h, speed, horizon, delta, &source.x0)?;
    let mut state = LevelSetState::point_source(grid, source.clone(), delta, settings.scheme)?;
    check_no_wraparound(&state, field, source.t0 + horizon)?;
    let mut stepper = Stepper::new(field, state.grid())?;

    let mut trace = FrontTrace {
        dim,
        h: settings.h,
        delta,
        laminar_speed: settings.scheme.laminar_speed,
        amplitude_bound: field.amplitude_bound(),
        source: source.clone(),
        horizon,
        times: Vec::new(),
        volume: Vec::new(),
        inscribed_radius: Vec::new(),
        max_extent: Vec::new(),
        perimeter: Vec::new(),
        symmetric_change: Vec::new(),
        nesting_defect: Vec::new(),
        source_cell_set: Vec::new(),
        box_sides: box_sides.to_vec(),
        box_volumes: vec![Vec::new(); box_sides.len()],
    };
    let windows: Vec<SpatialBox> = box_sides.iter().map(|s| SpatialBox::new(&source.x0, *s)).collect();
    let mut previous: Option<ReachableSet> = None;
    for k in 0..=n_samples {
        let t = source.t0 + horizon * k as f64 / n_samples as f64;
        stepper.advance_to(&mut state, t)?;
        let rs = reachable_indicator(&state, settings.threshold)?;
        trace.times.push(t);
        trace.volume.push(volume(&rs, None));
        trace.inscribed_radius.push(inscribed_ball_radius(&rs, &source.x0));
        trace.max_extent.push(max_extent(&rs, &source.x0));
        trace.perimeter.push(perimeter_estimate(&rs, None).corrected);
        trace.source_cell_set.push(rs.source_cell_set());
        for (i, w) in windows.iter().enumerate() {
            trace.box_volumes[i].push(volume(&rs, Some(w)));
        }
        match &previous {
            Some(p) => {
                trace.symmetric_change.push(symmetric_difference(p, &rs)?.0);
                trace.nesting_defect.push(nesting_defect(p, &rs)?);
            }
            None => {
                trace.symmetric_change.push(0.0);
                trace.nesting_defect.push(0);
            }
        }
        visit(&state, &rs)?;
        previous = Some(rs);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitingOutcome {
    /// `T` measured from the source time; `None` when censored.
    pub waiting_time: Option<f64>,
    pub censored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub measured: f64,
    pub bound: f64,
}

impl FrontTrace {
    fn elapsed(&self, k: usize) -> f64 {
        self.times[k] - self.source.t0
    }

    /// Smallest sampled `t*` such that the inscribed radius is at least
    /// `c (t - t0) - 2h` at every sample from `t*` to the horizon.
    pub fn waiting_time(&self, c: f64) -> Result<WaitingOutcome, FrontierError> {
        if !(c > 0.0 && c < self.laminar_speed) {
            return Err(FrontierError::InvalidParameter { name: "c", value: c });
        }
        let ok = |k: usize| self.inscribed_radius[k] >= c * self.elapsed(k) - 2.0 * self.h;
        let last = self.times.len() - 1;
        if !ok(last) {
            return Ok(WaitingOutcome {
                waiting_time: None,
                censored: true,
            });
        }
        let mut first = last;
        while first > 0 && ok(first - 1) {
            first -= 1;
        }
        Ok(WaitingOutcome {
            waiting_time: Some(self.elapsed(first)),
            censored: false,
        })
    }

    /// Supremum of the `c` for which [`FrontTrace::waiting_time`] is
    /// uncensored, capped at `A`.
    pub fn supremal_c(&self) -> f64 {
        let last = self.times.len() - 1;
        let tau = self.elapsed(last);
        if tau <= 0.0 {
            return self.laminar_speed;
        }
        ((self.inscribed_radius[last] + 2.0 * self.h) / tau).min(self.laminar_speed)
    }

    /// Samples with `A (t - t0) ≥ min_radius` where the volume falls below
    /// `factor · ω_d (A (t - t0))^d`.
    pub fn volume_growth_violations(&self, factor: f64, min_radius: f64) -> Vec<Violation> {
        let wd = unit_ball_volume(self.dim);
        (0..self.times.len())
            .filter_map(|k| {
                let rho = self.laminar_speed * self.elapsed(k);
                if rho < min_radius {
                    return None;
                }
                let bound = factor * wd * rho.powi(self.dim as i32);
                (self.volume[k] < bound).then_some(Violation {
                    time: self.times[k],
                    measured: self.volume[k],
                    bound,
                })
            })
            .collect()
    }

    /// Samples whose farthest set cell lies beyond
    /// `(A + M)(t - t0) + δ + 2h`.
    pub fn containment_violations(&self) -> Vec<Violation> {
        (0..self.times.len())
            .filter_map(|k| {
                let bound = (self.laminar_speed + self.amplitude_bound) * self.elapsed(k) + self.delta + 2.0 * self.h;
                (self.max_extent[k] > bound).then_some(Violation {
                    time: self.times[k],
                    measured: self.max_extent[k],
                    bound,
                })
            })
            .collect()
    }

    /// For each box side, the largest `K` with
    /// `Δ|Box_r ∩ R_t| / Δt = -K M r^(d-1)` over consecutive samples.
    pub fn lower_continuity_constants(&self) -> Vec<f64> {
        self.box_sides
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let scale = self.amplitude_bound * r.powi(self.dim as i32 - 1);
                let mut worst: f64 = 0.0;
                for k in 1..self.times.len() {
                    let rate = (self.box_volumes[i][k] - self.box_volumes[i][k - 1]) / (self.times[k] - self.times[k - 1]);
                    if rate < 0.0 {
                        worst = worst.max(if scale > 0.0 { -rate / scale } else { f64::INFINITY });
                    }
                }
                worst
            })
            .collect()
    }

    /// Samples where `Δ|Box_r ∩ R_t| / Δt < -k_max M r^(d-1)`.
    pub fn lower_continuity_violations(&self, k_max: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, r) in self.box_sides.iter().enumerate() {
            let bound = -k_max * self.amplitude_bound * r.powi(self.dim as i32 - 1);
            for k in 1..self.times.len() {
                let rate = (self.box_volumes[i][k] - self.box_volumes[i][k - 1]) / (self.times[k] - self.times[k - 1]);
                if rate < bound {
                    out.push(Violation {
                        time: self.times[k],
                        measured: rate,
                        bound,
                    });
                }
            }
        }
        out
    }

    /// Space-time perimeter proxy on `[t0, t_k]`: the trapezoid integral of
    /// the spatial perimeter plus the accumulated `|R_{t_j} Δ R_{t_{j-1}}|`.
    pub fn perimeter_proxy(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len());
        let mut acc = 0.0;
        for k in 0..self.times.len() {
            if k > 0 {
                let dt = self.times[k] - self.times[k - 1];
                acc += 0.5 * dt * (self.perimeter[k] + self.perimeter[k - 1]) + self.symmetric_change[k];
            }
            out.push(acc);
        }
        out
    }

    /// `4 (A + M)^d (2A + M) τ^d`
    pub fn perimeter_bound(&self, tau: f64) -> f64 {
        let (a, m) = (self.laminar_speed, self.amplitude_bound);
        4.0 * (a + m).powi(self.dim as i32) * (2.0 * a + m) * tau.powi(self.dim as i32)
    }

    /// Samples with `A (t - t0) ≥ min_radius` where the proxy exceeds
    /// `slack` times the bound.
    pub fn perimeter_violations(&self, slack: f64, min_radius: f64) -> Vec<Violation> {
        self.perimeter_proxy()
            .into_iter()
            .enumerate()
            .filter_map(|(k, p)| {
                if self.laminar_speed * self.elapsed(k) < min_radius {
                    return None;
                }
                let bound = slack * self.perimeter_bound(self.elapsed(k));
                (p > bound).then_some(Violation {
                    time: self.times[k],
                    measured: p,
                    bound,
                })
            })
            .collect()
    }
}

/// Everything needed to measure one waiting time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeSpec {
    pub c: f64,
    pub horizon: f64,
    pub n_samples: usize,
    pub front: FrontSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeRecord {
    pub seed: u64,
    pub source: Source,
    pub c: f64,
    /// Duration `T` after `t0`; `None` when censored.
    pub waiting_time: Option<f64>,
    pub censored: bool,
    pub r_star: Option<f64>,
    /// E_N still reached epsilon at the largest radius tried.
    #[serde(default)]
    pub r_star_censored: bool,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub volume: Vec<f64>,
    pub inscribed_radius: Vec<f64>,
}

impl WaitingTimeRecord {
    pub fn from_trace(trace: &FrontTrace, seed: u64, c: f64, r_star: Option<f64>) -> Result<Self, FrontierError> {
        let outcome = trace.waiting_time(c)?;
        Ok(WaitingTimeRecord {
            seed,
            source: trace.source.clone(),
            c,
            waiting_time: outcome.waiting_time,
            censored: outcome.censored,
            r_star,
            r_star_censored: false,
            horizon: trace.horizon,
            times: trace.times.clone(),
            volume: trace.volume.clone(),
            inscribed_radius: trace.inscribed_radius.clone(),
        })
    }
}

pub fn waiting_time(
    field: &VelocityField,
    source: &Source,
    spec: &WaitingTimeSpec,
) -> Result<WaitingTimeRecord, FrontierError> {
    if !(spec.c > 0.0 && spec.c < spec.front.scheme.laminar_speed) {
        return Err(FrontierError::InvalidParameter {
            name: "c",
            value: spec.c,
        });
    }
    let trace = trace_reachable(field, source, spec.horizon, spec.n_samples, &spec.front, &[])?;
    WaitingTimeRecord::from_trace(&trace, field.seed(), spec.c, None)
}
