//! Divergence-free space-time velocity fields.
//!
//! Every field is a finite sum of plane waves plus an optional constant
//! offset. In two dimensions a wave is the perpendicular gradient of the
//! stream function `a cos(2π k·x + ω t + θ)`; in three dimensions it is the
//! curl of the vector potential `-a p cos(2π k·x + ω t + θ)` with a unit
//! polarization `p ⟂ k`. Either way the velocity contributed by one wave is
//!
//! ```text
//! 2π a sin(2π k·x + ω t + θ) (k × p)
//! ```
//!
//! (with `p = e_z` in the plane), which is orthogonal to `k`, so the
//! divergence vanishes identically.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::stats::SpaceTimeBox;

/// Spatial vectors are stored padded to three components.
pub type Vector = [f64; 3];

/// Version tag written into serialized field documents.
pub const FIELD_SCHEMA_VERSION: u32 = 1;

/// Sample points per axis used by [`sup_norm_estimate`] when d = 2.
pub const SUP_SAMPLES_2D: usize = 33;
/// Sample points per axis used by [`sup_norm_estimate`] when d = 3.
pub const SUP_SAMPLES_3D: usize = 17;

/// Length of the time window, in units of `time_scale`, sampled when a
/// random Fourier field is normalized.
pub const NORMALIZATION_WINDOW: f64 = 64.0;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("amplitude bound must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("unsupported spatial dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("{kind} fields are only defined for d = {required}, got d = {got}")]
    DimensionMismatch {
        kind: &'static str,
        required: usize,
        got: usize,
    },
    #[error("wavevector must be nonzero with integer components, got {0:?}")]
    BadWavevector(Vec<f64>),
    #[error("in d = 3 a shear wavevector must lie in a coordinate plane, got {0:?}")]
    ShearNotPlanar(Vec<f64>),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("malformed field document: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Shear,
    Cellular,
    RandomFourier,
    Constant,
    Zero,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Shear => "shear",
            FieldKind::Cellular => "cellular",
            FieldKind::RandomFourier => "random_fourier",
            FieldKind::Constant => "constant",
            FieldKind::Zero => "zero",
        }
    }
}

/// One row of the mode table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Cycles per unit length.
    pub wavevector: Vec<f64>,
    /// Radians per unit time.
    pub temporal_frequency: f64,
    /// Stream function (d = 2) or vector potential (d = 3) amplitude.
    pub amplitude: f64,
    pub phase: f64,
    /// Unit vector potential direction, d = 3 only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<Vec<f64>>,
}

/// A mode compiled into the form used for evaluation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PlaneWave {
    /// `2π k`
    pub k: Vector,
    pub omega: f64,
    pub phase: f64,
    /// `2π a (k × p)`
    pub velocity: Vector,
}

impl PlaneWave {
    #[inline]
    pub fn phase_at(&self, t: f64, x: &[f64]) -> f64 {
        let mut p = self.omega * t + self.phase;
        for (ki, xi) in self.k.iter().zip(x) {
            p += ki * xi;
        }
        p
    }
}

/// A seeded, evaluable, divergence-free velocity field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "FieldDocument", into = "FieldDocument")]
pub struct VelocityField {
    kind: FieldKind,
    dim: usize,
    amplitude_bound: f64,
    seed: u64,
    modes: Vec<Mode>,
    mean: Vec<f64>,
    waves: Vec<PlaneWave>,
}

/// The serialized form of a field. It carries the full mode table so a
/// field can be reproduced exactly on another machine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldDocument {
    pub schema_version: u32,
    pub kind: FieldKind,
    pub dim: usize,
    pub amplitude_bound: f64,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub mode_table: Vec<Mode>,
}

impl From<VelocityField> for FieldDocument {
    fn from(f: VelocityField) -> Self {
        FieldDocument {
            schema_version: FIELD_SCHEMA_VERSION,
            kind: f.kind,
            dim: f.dim,
            amplitude_bound: f.amplitude_bound,
            seed: f.seed,
            mean: f.mean,
            mode_table: f.modes,
        }
    }
}

impl TryFrom<FieldDocument> for VelocityField {
    type Error = FieldError;

    fn try_from(doc: FieldDocument) -> Result<Self, Self::Error> {
        if doc.schema_version != FIELD_SCHEMA_VERSION {
            return Err(FieldError::Malformed(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        VelocityField::from_modes(
            doc.kind,
            doc.dim,
            doc.amplitude_bound,
            doc.seed,
            doc.modes_checked()?,
            doc.mean,
        )
    }
}

impl FieldDocument {
    fn modes_checked(&self) -> Result<Vec<Mode>, FieldError> {
        for m in &self.mode_table {
            if m.wavevector.len() != self.dim {
                return Err(FieldError::Malformed(format!(
                    "wavevector {:?} does not have {} components",
                    m.wavevector, self.dim
                )));
            }
            if self.dim == 3 && m.polarization.as_ref().map(|p| p.len()) != Some(3) {
                return Err(FieldError::Malformed(
                    "three-dimensional modes need a polarization".into(),
                ));
            }
        }
        Ok(self.mode_table.clone())
    }
}

/// Parameters of [`VelocityField::random_fourier`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFourierParams {
    pub dim: usize,
    pub amplitude_bound: f64,
    pub n_modes: usize,
    /// Largest |k_i| (in cycles per period) drawn for any component.
    pub max_wavenumber: u32,
    pub time_scale: f64,
    /// Spatial period of the torus the field lives on.
    pub period: f64,
    pub seed: u64,
}

impl Default for RandomFourierParams {
    fn default() -> Self {
        RandomFourierParams {
            dim: 2,
            amplitude_bound: 1.0,
            n_modes: 8,
            max_wavenumber: 1,
            time_scale: 1.0,
            period: 1.0,
            seed: 0,
        }
    }
}

fn check_dim(dim: usize) -> Result<(), FieldError> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(FieldError::UnsupportedDimension(dim))
    }
}

fn cross(a: &Vector, b: &Vector) -> Vector {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn pad(v: &[f64]) -> Vector {
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    out
}

fn compile(dim: usize, mode: &Mode) -> PlaneWave {
    let k = pad(&mode.wavevector);
    let p = match (dim, &mode.polarization) {
        (3, Some(p)) => pad(p),
        _ => [0.0, 0.0, 1.0],
    };
    let dir = cross(&k, &p);
    let scale = TAU * mode.amplitude;
    PlaneWave {
        k: [TAU * k[0], TAU * k[1], TAU * k[2]],
        omega: mode.temporal_frequency,
        phase: mode.phase,
        velocity: [scale * dir[0], scale * dir[1], scale * dir[2]],
    }
}

impl VelocityField {
    /// Builds a field from an explicit mode table.
    pub fn from_modes(
        kind: FieldKind,
        dim: usize,
        amplitude_bound: f64,
        seed: u64,
        modes: Vec<Mode>,
        mean: Vec<f64>,
    ) -> Result<Self, FieldError> {
        check_dim(dim)?;
        if !(amplitude_bound >= 0.0) || !amplitude_bound.is_finite() {
            return Err(FieldError::InvalidParameter {
                name: "amplitude_bound",
                value: amplitude_bound,
            });
        }
        let mean = if mean.is_empty() { vec![0.0; dim] } else { mean };
        if mean.len() != dim {
            return Err(FieldError::Malformed(format!(
                "mean has {} components, expected {dim}",
                mean.len()
            )));
        }
        let waves = modes.iter().map(|m| compile(dim, m)).collect();
        Ok(VelocityField {
            kind,
            dim,
            amplitude_bound,
            seed,
            modes,
            mean,
            waves,
        })
    }

    pub fn zero(dim: usize) -> Result<Self, FieldError> {
        Self::from_modes(FieldKind::Zero, dim, 0.0, 0, Vec::new(), vec![0.0; dim])
    }

    /// A spatially and temporally constant field. Not mean-zero; intended
    /// for exact-solution tests only.
    pub fn constant(v: &[f64]) -> Result<Self, FieldError> {
        check_dim(v.len())?;
        Self::from_modes(FieldKind::Constant, v.len(), norm(v), 0, Vec::new(), v.to_vec())
    }

    /// A time-independent shear `M sin(2π k·x)` directed perpendicular to
    /// `k`. In d = 3 the wavevector must have a zero component; the flow is
    /// then directed along `k × e_j` for the first such axis `j`.
    pub fn shear(m: f64, wavevector: &[f64]) -> Result<Self, FieldError> {
        let dim = wavevector.len();
        check_dim(dim)?;
        if !(m > 0.0) {
            return Err(FieldError::NonPositiveAmplitude(m));
        }
        let kn = norm(wavevector);
        if kn == 0.0 || wavevector.iter().any(|c| c.fract() != 0.0 || !c.is_finite()) {
            return Err(FieldError::BadWavevector(wavevector.to_vec()));
        }
        let polarization = if dim == 3 {
            let axis = wavevector
                .iter()
                .position(|c| *c == 0.0)
                .ok_or_else(|| FieldError::ShearNotPlanar(wavevector.to_vec()))?;
            let mut p = vec![0.0; 3];
            p[axis] = 1.0;
            Some(p)
        } else {
            None
        };
        let mode = Mode {
            wavevector: wavevector.to_vec(),
            temporal_frequency: 0.0,
            amplitude: m / (TAU * kn),
            phase: 0.0,
            polarization,
        };
        Self::from_modes(FieldKind::Shear, dim, m, 0, vec![mode], vec![0.0; dim])
    }

    /// The cellular flow with stream function
    /// `(M s / 2π) sin(2π x / s) sin(2π y / s)`.
    pub fn cellular(m: f64, cell_size: f64) -> Result<Self, FieldError> {
        if !(m > 0.0) {
            return Err(FieldError::NonPositiveAmplitude(m));
        }
        if !(cell_size > 0.0) {
            return Err(FieldError::InvalidParameter {
                name: "cell_size",
                value: cell_size,
            });
        }
        // sin X sin Y = (cos(X - Y) - cos(X + Y)) / 2
        let a = m * cell_size / (2.0 * TAU);
        let kk = 1.0 / cell_size;
        let modes = vec![
            Mode {
                wavevector: vec![kk, -kk],
                temporal_frequency: 0.0,
                amplitude: a,
                phase: 0.0,
                polarization: None,
            },
            Mode {
                wavevector: vec![kk, kk],
                temporal_frequency: 0.0,
                amplitude: -a,
                phase: 0.0,
                polarization: None,
            },
        ];
        Self::from_modes(FieldKind::Cellular, 2, m, 0, modes, vec![0.0; 2])
    }

    /// A random sum of traveling plane waves, rescaled so that its sampled
    /// sup-norm equals `amplitude_bound`.
    pub fn random_fourier(params: &RandomFourierParams) -> Result<Self, FieldError> {
        let dim = params.dim;
        check_dim(dim)?;
        if !(params.amplitude_bound > 0.0) {
            return Err(FieldError::NonPositiveAmplitude(params.amplitude_bound));
        }
        if params.n_modes == 0 {
            return Err(FieldError::InvalidParameter {
                name: "n_modes",
                value: 0.0,
            });
        }
        if params.max_wavenumber == 0 {
            return Err(FieldError::InvalidParameter {
                name: "max_wavenumber",
                value: 0.0,
            });
        }
        for (name, value) in [("time_scale", params.time_scale), ("period", params.period)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(FieldError::InvalidParameter { name, value });
            }
        }

        let kmax = params.max_wavenumber as i64;
        let mut lattice = Vec::new();
        let range: Vec<i64> = (-kmax..=kmax).collect();
        match dim {
            2 => {
                for &a in &range {
                    for &b in &range {
                        if a != 0 || b != 0 {
                            lattice.push(vec![a as f64, b as f64]);
                        }
                    }
                }
            }
            _ => {
                for &a in &range {
                    for &b in &range {
                        for &c in &range {
                            if a != 0 || b != 0 || c != 0 {
                                lattice.push(vec![a as f64, b as f64, c as f64]);
                            }
                        }
                    }
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let omega_dist = Normal::new(0.0, 1.0 / params.time_scale)
            .map_err(|_| FieldError::InvalidParameter {
                name: "time_scale",
                value: params.time_scale,
            })?;
        let mut modes = Vec::with_capacity(params.n_modes);
        for _ in 0..params.n_modes {
            let integer_k = lattice.choose(&mut rng).expect("nonempty lattice").clone();
            let k: Vec<f64> = integer_k.iter().map(|c| c / params.period).collect();
            let phase = rng.gen_range(0.0..TAU);
            let omega = omega_dist.sample(&mut rng);
            let polarization = if dim == 3 {
                Some(random_orthogonal_unit(&k, &mut rng))
            } else {
                None
            };
            // Every wave starts with unit velocity amplitude.
            let amplitude = 1.0 / (TAU * norm(&k));
            modes.push(Mode {
                wavevector: k,
                temporal_frequency: omega,
                amplitude,
                phase,
                polarization,
            });
        }

        let raw = Self::from_modes(
            FieldKind::RandomFourier,
            dim,
            params.amplitude_bound,
            params.seed,
            modes,
            vec![0.0; dim],
        )?;
        let sup = raw.normalization_sup(params);
        let scale = params.amplitude_bound / sup;
        let modes = raw
            .modes
            .iter()
            .map(|m| Mode {
                amplitude: m.amplitude * scale,
                ..m.clone()
            })
            .collect();
        Self::from_modes(
            FieldKind::RandomFourier,
            dim,
            params.amplitude_bound,
            params.seed,
            modes,
            vec![0.0; dim],
        )
    }

    /// Sampled sup-norm over one spatial period and a long time window,
    /// polished by gradient ascent from the best samples.
    fn normalization_sup(&self, params: &RandomFourierParams) -> f64 {
        let dim = self.dim;
        let per_axis = (8 * params.max_wavenumber as usize).max(16);
        let spatial = per_axis.pow(dim as u32);
        let dt = params.time_scale / 8.0;
        let window = NORMALIZATION_WINDOW * params.time_scale;
        let nt_full = (window / dt).ceil() as usize;
        let nt = nt_full.min((2_000_000 / spatial).max(64));
        let dt = window / nt as f64;
        let dx = params.period / per_axis as f64;

        let mut best: Vec<(f64, [f64; 4])> = Vec::new();
        let keep = 16;
        let mut x = [0.0; 3];
        for it in 0..nt {
            let t = it as f64 * dt;
            for s in 0..spatial {
                let mut rem = s;
                for xi in x.iter_mut().take(dim) {
                    *xi = (rem % per_axis) as f64 * dx;
                    rem /= per_axis;
                }
                let v = self.eval(t, &x[..dim]);
                let speed2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                if best.len() < keep || speed2 > best[best.len() - 1].0 {
                    let point = [t, x[0], x[1], x[2]];
                    let pos = best.partition_point(|(b, _)| *b >= speed2);
                    best.insert(pos, (speed2, point));
                    best.truncate(keep);
                }
            }
        }
        let mut sup2 = best.first().map(|b| b.0).unwrap_or(0.0);
        for (_, start) in &best {
            sup2 = sup2.max(self.ascend_speed2(*start, dx.min(dt)));
        }
        sup2.sqrt()
    }

    fn speed2_and_grad(&self, p: &[f64; 4]) -> (f64, [f64; 4]) {
        let (t, x) = (p[0], &p[1..1 + self.dim]);
        let mut v = [self.mean[0], self.mean[1], self.mean.get(2).copied().unwrap_or(0.0)];
        // jac[c][s]: derivative of component c with respect to coordinate s (t, x...)
        let mut jac = [[0.0; 4]; 3];
        for w in &self.waves {
            let (s, c) = w.phase_at(t, x).sin_cos();
            for comp in 0..3 {
                v[comp] += w.velocity[comp] * s;
                jac[comp][0] += w.velocity[comp] * c * w.omega;
                for a in 0..self.dim {
                    jac[comp][a + 1] += w.velocity[comp] * c * w.k[a];
                }
            }
        }
        let f = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let mut g = [0.0; 4];
        for (s, gs) in g.iter_mut().enumerate() {
            *gs = 2.0 * (0..3).map(|c| v[c] * jac[c][s]).sum::<f64>();
        }
        (f, g)
    }

    fn ascend_speed2(&self, start: [f64; 4], initial_step: f64) -> f64 {
        let mut p = start;
        let (mut f, mut g) = self.speed2_and_grad(&p);
        let mut step = initial_step;
        for _ in 0..200 {
            let gn = g.iter().map(|c| c * c).sum::<f64>().sqrt();
            if gn == 0.0 || step < 1e-14 {
                break;
            }
            let mut trial = p;
            for (ti, gi) in trial.iter_mut().zip(&g) {
                *ti += step * gi / gn;
            }
            let (ft, gt) = self.speed2_and_grad(&trial);
            if ft > f {
                p = trial;
                f = ft;
                g = gt;
                step *= 1.5;
            } else {
                step *= 0.5;
            }
        }
        f
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The declared bound M on |V|.
    pub fn amplitude_bound(&self) -> f64 {
        self.amplitude_bound
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub(crate) fn waves(&self) -> &[PlaneWave] {
        &self.waves
    }

    pub fn is_time_independent(&self) -> bool {
        self.waves.iter().all(|w| w.omega == 0.0)
    }

    /// V(t, x). Components beyond `dim` are zero.
    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> Vector {
        let mut v = [0.0; 3];
        v[..self.dim].copy_from_slice(&self.mean);
        for w in &self.waves {
            let s = w.phase_at(t, x).sin();
            v[0] += w.velocity[0] * s;
            v[1] += w.velocity[1] * s;
            v[2] += w.velocity[2] * s;
        }
        v
    }

    /// Divergence computed from the closed-form derivatives of each wave.
    pub fn analytic_divergence(&self, t: f64, x: &[f64]) -> f64 {
        self.waves
            .iter()
            .map(|w| {
                let c = w.phase_at(t, x).cos();
                let kv: f64 = (0..3).map(|i| w.k[i] * w.velocity[i]).sum();
                kv * c
            })
            .sum()
    }

    /// The field seen by trajectories run backwards in time:
    /// `V_rev(s, x) = -V(-s, x)`.
    pub fn time_reversed(&self) -> VelocityField {
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                temporal_frequency: -m.temporal_frequency,
                amplitude: -m.amplitude,
                ..m.clone()
            })
            .collect();
        Self::from_modes(
            self.kind,
            self.dim,
            self.amplitude_bound,
            self.seed,
            modes,
            self.mean.iter().map(|c| -c).collect(),
        )
        .expect("reversal preserves validity")
    }
}

fn random_orthogonal_unit(k: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let kn = norm(k);
    loop {
        let g: Vec<f64> = (0..3).map(|_| StandardNormal.sample(rng)).collect();
        let dot: f64 = g.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (kn * kn);
        let p: Vec<f64> = g.iter().zip(k).map(|(a, b)| a - dot * b).collect();
        let pn = norm(&p);
        if pn > 1e-6 {
            return p.iter().map(|c| c / pn).collect();
        }
    }
}

/// Max of |V| over a dense deterministic tensor grid covering the closed box.
pub fn sup_norm_estimate(field: &VelocityField, region: &SpaceTimeBox) -> f64 {
    let per_axis = if field.dim() == 2 {
        SUP_SAMPLES_2D
    } else {
        SUP_SAMPLES_3D
    };
    sup_norm_with_samples(field, region, per_axis)
}

pub fn sup_norm_with_samples(field: &VelocityField, region: &SpaceTimeBox, per_axis: usize) -> f64 {
    let dim = field.dim();
    let per_axis = per_axis.max(2);
    let coords = |center: f64, j: usize| {
        center - region.side / 2.0 + region.side * j as f64 / (per_axis - 1) as f64
    };
    let total = per_axis.pow(dim as u32 + 1);
    let mut x = [0.0; 3];
    let mut best: f64 = 0.0;
    for s in 0..total {
        let mut rem = s;
        let t = coords(region.center_time, rem % per_axis);
        rem /= per_axis;
        for (a, xa) in x.iter_mut().enumerate().take(dim) {
            *xa = coords(region.center_point[a], rem % per_axis);
            rem /= per_axis;
        }
        best = best.max(norm(&field.eval(t, &x[..dim])));
    }
    best
}

/// Largest central-difference divergence over grid points of spacing `h`
/// inside the box, sampled on five time slices.
pub fn verify_divergence_free(field: &VelocityField, region: &SpaceTimeBox, h: f64) -> f64 {
    const MAX_POINTS_PER_AXIS: usize = 65;
    let dim = field.dim();
    let m = (((region.side / h).floor() as usize) + 1).clamp(1, MAX_POINTS_PER_AXIS);
    let offset = |j: usize| (j as f64 - (m - 1) as f64 / 2.0) * h;
    let mut worst: f64 = 0.0;
    let mut x = [0.0; 3];
    for ts in 0..5 {
        let t = region.center_time + region.side * (ts as f64 / 4.0 - 0.5);
        for s in 0..m.pow(dim as u32) {
            let mut rem = s;
            for (a, xa) in x.iter_mut().enumerate().take(dim) {
                *xa = region.center_point[a] + offset(rem % m);
                rem /= m;
            }
            let mut div = 0.0;
            for a in 0..dim {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                div += (field.eval(t, &xp[..dim])[a] - field.eval(t, &xm[..dim])[a]) / (2.0 * h);
            }
            worst = worst.max(div.abs());
        }
    }
    worst
}
