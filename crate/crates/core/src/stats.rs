//! Space-time box averages, the empirical statistic E_N, the coercivity
//! scale r*, and face fluxes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{norm, Vector, VelocityField};
use crate::quadrature::{integrate, integrate_blocks, AxisRule, Rule};

/// Default quadrature points per axis per sub-box.
pub const DEFAULT_Q: usize = 32;
/// Default ratio between consecutive radii of the r* grid.
pub const DEFAULT_RADIUS_RATIO: f64 = 1.090_507_732_665_257_7; // 2^(1/8)

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("box side must be positive, got {0}")]
    NonPositiveSide(f64),
    #[error("quadrature resolution must be at least {min}, got {got}")]
    QuadratureTooCoarse { min: usize, got: usize },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("dimension mismatch: field has d = {field}, point has {point} components")]
    DimensionMismatch { field: usize, point: usize },
    #[error("lemma requires 1 <= L < N, got L = {l}, N = {n}")]
    BadLatticeRatio { l: usize, n: usize },
    #[error("lemma hypothesis fails: r = {r} is below the measured r* = {r_star}")]
    BelowRStar { r: f64, r_star: f64 },
    #[error("need at least one sample center and one radius")]
    EmptySample,
}

/// The space-time box `(t, x) + (-r/2, r/2)^(1+d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeBox {
    pub center_time: f64,
    pub center_point: Vec<f64>,
    pub side: f64,
}

impl SpaceTimeBox {
    pub fn new(center_time: f64, center_point: &[f64], side: f64) -> Result<Self, StatsError> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(StatsError::NonPositiveSide(side));
        }
        Ok(SpaceTimeBox {
            center_time,
            center_point: center_point.to_vec(),
            side,
        })
    }

    pub fn dim(&self) -> usize {
        self.center_point.len()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32 + 1)
    }

    /// Splits each axis into `n` equal pieces and returns, per axis, the
    /// rule for every piece.
    fn split_rules(&self, rule: Rule, n: usize, q: usize) -> Vec<Vec<AxisRule>> {
        let sub = self.side / n as f64;
        std::iter::once(self.center_time)
            .chain(self.center_point.iter().copied())
            .map(|c| {
                let lo = c - self.side / 2.0;
                (0..n)
                    .map(|b| AxisRule::new(rule, lo + b as f64 * sub, lo + (b + 1) as f64 * sub, q))
                    .collect()
            })
            .collect()
    }
}

fn check_dim(field: &VelocityField, x: &[f64]) -> Result<(), StatsError> {
    if field.dim() != x.len() {
        return Err(StatsError::DimensionMismatch {
            field: field.dim(),
            point: x.len(),
        });
    }
    Ok(())
}

fn check_q(q: usize) -> Result<(), StatsError> {
    if q < 2 {
        return Err(StatsError::QuadratureTooCoarse { min: 2, got: q });
    }
    Ok(())
}

/// Space-time average of V over the box by the midpoint rule.
pub fn box_average(field: &VelocityField, region: &SpaceTimeBox, q: usize) -> Result<Vec<f64>, StatsError> {
    check_q(q)?;
    check_dim(field, &region.center_point)?;
    let axes: Vec<AxisRule> = region
        .split_rules(Rule::Midpoint, 1, q)
        .into_iter()
        .map(|mut v| v.remove(0))
        .collect();
    let total = integrate(field, &axes);
    let vol = region.volume();
    Ok(total[..field.dim()].iter().map(|c| c / vol).collect())
}

/// `E_N[V; Q_r(t, x)]`: the largest |average| over the N^(d+1) sub-boxes
/// of side r/N that tile the box.
pub fn empirical_e_n(
    field: &VelocityField,
    center_time: f64,
    center_point: &[f64],
    r: f64,
    n: usize,
    q: usize,
) -> Result<f64, StatsError> {
    check_q(q)?;
    check_dim(field, center_point)?;
    if n == 0 {
        return Err(StatsError::InvalidParameter {
            name: "N",
            value: 0.0,
        });
    }
    let region = SpaceTimeBox::new(center_time, center_point, r)?;
    let blocks = region.split_rules(Rule::Midpoint, n, q);
    let sub_volume = (r / n as f64).powi(field.dim() as i32 + 1);
    let sums = integrate_blocks(field, &blocks);
    Ok(sums
        .iter()
        .map(|v| norm(&v[..field.dim()]) / sub_volume)
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub r_values: Vec<f64>,
    pub e_n_values: Vec<f64>,
    pub n: usize,
    pub epsilon: f64,
    pub r_star: f64,
    /// E_N at the largest radius still reaches epsilon, so the true r* may
    /// lie beyond the grid.
    pub censored: bool,
    pub center_time: f64,
    pub center_point: Vec<f64>,
    pub q: usize,
}

/// Parameters for [`r_star`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RStarSpec {
    pub n: usize,
    pub epsilon: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    #[serde(default = "default_q")]
    pub q: usize,
}

fn default_q() -> usize {
    DEFAULT_Q
}

impl RStarSpec {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.r_min > 0.0) || !(self.r_max > self.r_min) {
            return Err(StatsError::InvalidParameter {
                name: "r_min/r_max",
                value: self.r_min,
            });
        }
        if self.n_r < 2 {
            return Err(StatsError::InvalidParameter {
                name: "n_r",
                value: self.n_r as f64,
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(StatsError::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
            });
        }
        if self.n == 0 {
            return Err(StatsError::InvalidParameter { name: "N", value: 0.0 });
        }
        check_q(self.q)
    }

    pub fn radii(&self) -> Vec<f64> {
        geometric_grid(self.r_min, self.r_max, self.n_r)
    }
}

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo * ratio.powf(i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Evaluates E_N on a geometric radius grid and reads off r*.
pub fn r_star(
    field: &VelocityField,
    center_time: f64,
    center_point: &[f64],
    spec: &RStarSpec,
) -> Result<EmpiricalStats, StatsError> {
    spec.validate()?;
    check_dim(field, center_point)?;
    let r_values = spec.radii();
    let e_n_values = r_values
        .par_iter()
        .map(|&r| empirical_e_n(field, center_time, center_point, r, spec.n, spec.q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(stats_from_curve(
        r_values,
        e_n_values,
        spec,
        center_time,
        center_point,
    ))
}

pub(crate) fn stats_from_curve(
    r_values: Vec<f64>,
    e_n_values: Vec<f64>,
    spec: &RStarSpec,
    center_time: f64,
    center_point: &[f64],
) -> EmpiricalStats {
    let r_star = r_values
        .iter()
        .zip(&e_n_values)
        .filter(|(_, e)| **e >= spec.epsilon)
        .map(|(r, _)| *r)
        .fold(0.0, f64::max);
    let censored = *e_n_values.last().expect("n_r >= 2") >= spec.epsilon;
    EmpiricalStats {
        r_values,
        e_n_values,
        n: spec.n,
        epsilon: spec.epsilon,
        r_star,
        censored,
        center_time,
        center_point: center_point.to_vec(),
        q: spec.q,
    }
}

/// Largest radius on `r_grid` at which the purely spatial average over
/// `Box_r(x)` at time `t` reaches epsilon, maximized over the centers.
pub fn uniform_r_star(
    field: &VelocityField,
    epsilon: f64,
    sample_centers: &[(f64, Vec<f64>)],
    r_grid: &[f64],
    q: usize,
) -> Result<f64, StatsError> {
    check_q(q)?;
    if sample_centers.is_empty() || r_grid.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let dim = field.dim();
    let mut best: f64 = 0.0;
    for (t, x) in sample_centers {
        check_dim(field, x)?;
        for &r in r_grid {
            if r <= best {
                continue;
            }
            let mut axes = vec![AxisRule::point(*t)];
            for xi in x {
                axes.push(AxisRule::new(Rule::Midpoint, xi - r / 2.0, xi + r / 2.0, q));
            }
            let v = integrate(field, &axes);
            let avg = norm(&v[..dim]) / r.powi(dim as i32);
            if avg >= epsilon {
                best = r;
            }
        }
    }
    Ok(best)
}

/// An axis-aligned face with outward normal `+e_axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub center: Vec<f64>,
    pub normal_axis: usize,
    pub side: f64,
}

/// `∫_I ∫_F V·n dA dτ` by tensor-product Gauss–Legendre quadrature.
pub fn face_flux(
    field: &VelocityField,
    face: &Face,
    time_interval: (f64, f64),
    q: usize,
) -> Result<f64, StatsError> {
    check_q(q)?;
    check_dim(field, &face.center)?;
    if face.normal_axis >= field.dim() {
        return Err(StatsError::InvalidParameter {
            name: "normal_axis",
            value: face.normal_axis as f64,
        });
    }
    Ok(face_integral(field, face, time_interval, q)[face.normal_axis])
}

fn face_integral(field: &VelocityField, face: &Face, time: (f64, f64), q: usize) -> Vector {
    let mut axes = Vec::with_capacity(face.center.len() + 1);
    axes.push(AxisRule::new(Rule::GaussLegendre, time.0, time.1, q));
    for (a, c) in face.center.iter().enumerate() {
        if a == face.normal_axis {
            axes.push(AxisRule::point(*c));
        } else {
            axes.push(AxisRule::new(Rule::GaussLegendre, c - face.side / 2.0, c + face.side / 2.0, q));
        }
    }
    integrate(field, &axes)
}

/// Instantaneous net outward flux through the boundary of the cube
/// `Box_side(center)` at time `t`.
pub fn net_outward_flux(
    field: &VelocityField,
    t: f64,
    center: &[f64],
    side: f64,
    q: usize,
) -> Result<f64, StatsError> {
    check_q(q)?;
    check_dim(field, center)?;
    let mut total = 0.0;
    for axis in 0..center.len() {
        for sign in [1.0, -1.0] {
            let mut axes = vec![AxisRule::point(t)];
            for (a, c) in center.iter().enumerate() {
                if a == axis {
                    axes.push(AxisRule::point(c + sign * side / 2.0));
                } else {
                    axes.push(AxisRule::new(Rule::GaussLegendre, c - side / 2.0, c + side / 2.0, q));
                }
            }
            total += sign * integrate(field, &axes)[axis];
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceFluxReport {
    pub r: f64,
    pub n: usize,
    pub l: usize,
    pub epsilon: f64,
    pub r_star: f64,
    pub faces_checked: usize,
    /// Max over faces of `|flux| / ((ε + M/L) |F × I|)`.
    pub max_ratio: f64,
    pub worst_face: Option<Face>,
    pub worst_interval: Option<(f64, f64)>,
}

/// Enumerates lattice sub-faces of side `L r / N` inside `Box_r(x)` over
/// lattice time intervals of length `L r / N` inside the box's time span.
#[allow(clippy::too_many_arguments)]
pub fn check_face_flux_lemma(
    field: &VelocityField,
    center_time: f64,
    center_point: &[f64],
    r: f64,
    n: usize,
    l: usize,
    epsilon: f64,
    r_star: f64,
    q: usize,
) -> Result<FaceFluxReport, StatsError> {
    check_q(q)?;
    check_dim(field, center_point)?;
    if !(l >= 1 && l < n) {
        return Err(StatsError::BadLatticeRatio { l, n });
    }
    if !(r > 0.0) {
        return Err(StatsError::NonPositiveSide(r));
    }
    if r < r_star {
        return Err(StatsError::BelowRStar { r, r_star });
    }
    let dim = field.dim();
    let step = r / n as f64;
    let side = l as f64 * step;
    let scale = (epsilon + field.amplitude_bound() / l as f64) * side.powi(dim as i32);
    let starts = n - l + 1;
    let lo_t = center_time - r / 2.0;

    let mut jobs = Vec::new();
    for axis in 0..dim {
        for plane in 0..=n {
            for k in 0..starts.pow(dim as u32 - 1) {
                for it in 0..starts {
                    jobs.push((axis, plane, k, it));
                }
            }
        }
    }
    let results: Vec<(f64, Face, (f64, f64))> = jobs
        .par_iter()
        .map(|&(axis, plane, k, it)| {
            let mut c = vec![0.0; dim];
            let mut rem = k;
            for (a, ca) in c.iter_mut().enumerate() {
                let lo = center_point[a] - r / 2.0;
                if a == axis {
                    *ca = lo + plane as f64 * step;
                } else {
                    *ca = lo + (rem % starts) as f64 * step + side / 2.0;
                    rem /= starts;
                }
            }
            let face = Face {
                center: c,
                normal_axis: axis,
                side,
            };
            let t0 = lo_t + it as f64 * step;
            let interval = (t0, t0 + side);
            let flux = face_integral(field, &face, interval, q)[axis];
            (flux.abs() / scale, face, interval)
        })
        .collect();
    let faces_checked = results.len();
    let worst = results
        .into_iter()
        .fold(None::<(f64, Face, (f64, f64))>, |acc, item| match acc {
            Some(a) if a.0 >= item.0 => Some(a),
            _ => Some(item),
        });
    let (max_ratio, worst_face, worst_interval) = match worst {
        Some((ratio, f, i)) => (ratio, Some(f), Some(i)),
        None => (0.0, None, None),
    };
    Ok(FaceFluxReport {
        r,
        n,
        l,
        epsilon,
        r_star,
        faces_checked,
        max_ratio,
        worst_face,
        worst_interval,
    })
}
