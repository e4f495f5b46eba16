//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::field::{FieldKind, RandomFourierParams, VelocityField};
use crate::frontier::{FrontSettings, SchemeParams, Source, DEFAULT_DELTA_CELLS};
use crate::stats::{RStarSpec, DEFAULT_Q};

/// Parameters of one field family. Only the keys relevant to `kind` are read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(rename = "M", default = "one")]
    pub m: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default = "one_u32")]
    pub max_wavenumber: u32,
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Spatial period of random Fourier fields.
    #[serde(default = "one")]
    pub period: f64,
    #[serde(default = "one")]
    pub cell_size: f64,
    #[serde(default)]
    pub wavevector: Option<Vec<f64>>,
    /// Velocity of a constant test field.
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn two() -> usize {
    2
}
fn default_modes() -> usize {
    8
}

impl FieldSpec {
    pub fn zero(dim: usize) -> Self {
        FieldSpec {
            kind: FieldKind::Zero,
            dim,
            m: 1.0,
            seed: 0,
            n_modes: default_modes(),
            max_wavenumber: 1,
            time_scale: 1.0,
            period: 1.0,
            cell_size: 1.0,
            wavevector: None,
            velocity: None,
        }
    }

    /// Builds the field with the given seed in place of `self.seed`.
    pub fn build(&self, seed: u64) -> Result<VelocityField, ExperimentError> {
        let field = match self.kind {
            FieldKind::Zero => VelocityField::zero(self.dim)?,
            FieldKind::Constant => {
                let v = self
                    .velocity
                    .as_ref()
                    .ok_or_else(|| ExperimentError::Config("constant field needs `velocity`".into()))?;
                VelocityField::constant(v)?
            }
            FieldKind::Shear => {
                let k = self.wavevector.clone().unwrap_or_else(|| {
                    let mut k = vec![0.0; self.dim];
                    k[self.dim - 1] = 1.0;
                    k
                });
                if k.len() != self.dim {
                    return Err(ExperimentError::Config(format!(
                        "wavevector {k:?} does not have {} components",
                        self.dim
                    )));
                }
                VelocityField::shear(self.m, &k)?
            }
            FieldKind::Cellular => VelocityField::cellular(self.m, self.cell_size)?,
            FieldKind::RandomFourier => VelocityField::random_fourier(&RandomFourierParams {
                dim: self.dim,
                amplitude_bound: self.m,
                n_modes: self.n_modes,
                max_wavenumber: self.max_wavenumber,
                time_scale: self.time_scale,
                period: self.period,
                seed,
            })?,
        };
        Ok(field)
    }

    /// Length over which the field repeats in space, used to size checks.
    pub fn length_scale(&self) -> f64 {
        match self.kind {
            FieldKind::RandomFourier => self.period,
            FieldKind::Shear => 1.0,
            FieldKind::Cellular => self.cell_size,
            FieldKind::Zero | FieldKind::Constant => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontConfig {
    pub h: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "one")]
    pub laminar_speed: f64,
    /// Bump radius; `4h` when omitted.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "half")]
    pub threshold: f64,
}

fn default_cfl() -> f64 {
    0.5
}
fn half() -> f64 {
    0.5
}

impl FrontConfig {
    pub fn settings(&self) -> FrontSettings {
        FrontSettings {
            h: self.h,
            delta: self.delta,
            scheme: SchemeParams {
                laminar_speed: self.laminar_speed,
                cfl_safety: self.cfl,
            },
            threshold: self.threshold,
        }
    }
}

impl Default for FrontConfig {
    fn default() -> Self {
        FrontConfig {
            h: 1.0 / 128.0,
            cfl: default_cfl(),
            laminar_speed: 1.0,
            delta: None,
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcePoint {
    pub t0: f64,
    pub x0: Vec<f64>,
}

/// Either an explicit list or `count` sources drawn per seed. Drawn source
/// `j` sits at `j S e_1 + u_j`, where `S` is the smallest multiple of the
/// field's length scale that is at least `2 (A + M) horizon` and `u_j` is
/// uniform on one period cell; `t0` is uniform on `t0_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default = "one_usize")]
    pub count: usize,
    #[serde(default = "default_t0_range")]
    pub t0_range: [f64; 2],
    #[serde(default)]
    pub points: Vec<SourcePoint>,
}

fn one_usize() -> usize {
    1
}
fn default_t0_range() -> [f64; 2] {
    [0.0, 10.0]
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            count: 1,
            t0_range: default_t0_range(),
            points: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitingConfig {
    /// Coercivity constants; each produces one record per source.
    pub c: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Box sides for the `|Box_r ∩ R_t|` diagnostics.
    #[serde(default)]
    pub box_sides: Vec<f64>,
}

fn default_samples() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    /// Center for the `stats` subcommand; ensembles use each source.
    #[serde(default)]
    pub center_time: f64,
    #[serde(default)]
    pub center_point: Option<Vec<f64>>,
}

fn default_q() -> usize {
    DEFAULT_Q
}

impl StatsConfig {
    pub fn spec(&self) -> RStarSpec {
        RStarSpec {
            n: self.n,
            epsilon: self.epsilon,
            r_min: self.r_min,
            r_max: self.r_max,
            n_r: self.n_r,
            q: self.q,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    #[serde(default)]
    pub start: u64,
    #[serde(default = "one_u64")]
    pub count: u64,
}

fn one_u64() -> u64 {
    1
}

impl Default for SeedRange {
    fn default() -> Self {
        SeedRange { start: 0, count: 1 }
    }
}

impl SeedRange {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.start..self.start + self.count
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Evolve in the time-reversed field `-V(-t, x)`.
    #[serde(default)]
    pub reverse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    /// Survival is evaluated at `n_t` equally spaced times on `[0, t_max]`;
    /// `t_max` defaults to the largest horizon in the input.
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default)]
    pub t_max: Option<f64>,
}

fn default_n_t() -> usize {
    41
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig { n_t: default_n_t(), t_max: None }
    }
}

/// Sizes of the checks run by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Exact-ball and φ-domination checks use this spacing.
    #[serde(default = "default_verify_h")]
    pub exact_h: f64,
    #[serde(default = "default_exact_t")]
    pub exact_t: f64,
    /// Evolution time compared against the trajectory oracle.
    #[serde(default = "default_oracle_t")]
    pub oracle_t: f64,
    /// Level-set refinement relative to the 128-cell oracle grid.
    #[serde(default = "default_oracle_refine")]
    pub oracle_refine: usize,
    #[serde(default = "default_verify_seeds")]
    pub seeds: u64,
}

fn default_verify_h() -> f64 {
    1.0 / 64.0
}
fn default_exact_t() -> f64 {
    0.5
}
fn default_oracle_t() -> f64 {
    0.2
}
fn default_oracle_refine() -> usize {
    5
}
fn default_verify_seeds() -> u64 {
    2
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            exact_h: default_verify_h(),
            exact_t: default_exact_t(),
            oracle_t: default_oracle_t(),
            oracle_refine: default_oracle_refine(),
            seeds: default_verify_seeds(),
        }
    }
}

/// A complete run description. Every output is a function of this value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldSpec,
    #[serde(default)]
    pub front: FrontConfig,
    #[serde(default)]
    pub sources: SourceConfig,
    #[serde(default)]
    pub waiting: Option<WaitingConfig>,
    #[serde(default)]
    pub stats: Option<StatsConfig>,
    #[serde(default)]
    pub seeds: SeedRange,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub tails: TailConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("gcoerce-out")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let f = &self.front;
        if !(f.h > 0.0) || !(f.laminar_speed > 0.0) || !(f.threshold > 0.0 && f.threshold < 1.0) {
            return Err(ExperimentError::Config(
                "front needs h > 0, laminar_speed > 0 and 0 < threshold < 1".into(),
            ));
        }
        if let Some(delta) = f.delta {
            if delta < 2.0 * f.h {
                return Err(ExperimentError::Config(format!("delta = {delta} is below 2h")));
            }
        }
        if let Some(w) = &self.waiting {
            if !(w.horizon > 0.0) || w.n_samples == 0 {
                return Err(ExperimentError::Config("waiting needs horizon > 0 and n_samples >= 1".into()));
            }
            if w.c.is_empty() || w.c.iter().any(|c| !(*c > 0.0 && *c < f.laminar_speed)) {
                return Err(ExperimentError::Config(format!(
                    "every c must lie in (0, A = {}), got {:?}",
                    f.laminar_speed, w.c
                )));
            }
        }
        if let Some(s) = &self.stats {
            s.spec().validate()?;
        }
        if self.sources.points.iter().any(|p| p.x0.len() != self.field.dim) {
            return Err(ExperimentError::Config(format!(
                "every source needs {} coordinates",
                self.field.dim
            )));
        }
        if self.sources.points.is_empty() && self.sources.count == 0 {
            return Err(ExperimentError::Config("no sources".into()));
        }
        if !(self.sources.t0_range[1] >= self.sources.t0_range[0]) {
            return Err(ExperimentError::Config("t0_range must be increasing".into()));
        }
        if self.seeds.count == 0 {
            return Err(ExperimentError::Config("seed count must be positive".into()));
        }
        Ok(())
    }

    pub fn waiting(&self) -> Result<&WaitingConfig, ExperimentError> {
        self.waiting
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("missing [waiting] section".into()))
    }

    pub fn stats(&self) -> Result<&StatsConfig, ExperimentError> {
        self.stats
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("missing [stats] section".into()))
    }

    /// Minimal spacing between sources of one field sample.
    pub fn source_spacing(&self, horizon: f64) -> f64 {
        2.0 * (self.front.laminar_speed + self.field.m) * horizon
    }

    /// The sources measured in the field with this seed.
    pub fn sources_for_seed(&self, seed: u64, horizon: f64) -> Result<Vec<Source>, ExperimentError> {
        let spacing = self.source_spacing(horizon);
        if !self.sources.points.is_empty() {
            let pts = &self.sources.points;
            for i in 0..pts.len() {
                for j in 0..i {
                    let dx = pts[i]
                        .x0
                        .iter()
                        .zip(&pts[j].x0)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let dt = (pts[i].t0 - pts[j].t0).abs();
                    if dx.max(dt) < spacing {
                        return Err(ExperimentError::Config(format!(
                            "sources {j} and {i} are closer than 2 (A + M) horizon = {spacing}"
                        )));
                    }
                }
            }
            return Ok(pts
                .iter()
                .map(|p| Source {
                    t0: p.t0,
                    x0: p.x0.clone(),
                })
                .collect());
        }
        let cell = self.field.length_scale();
        let stride = cell * (spacing / cell).ceil().max(1.0);
        let [lo, hi] = self.sources.t0_range;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.sources.count);
        for j in 0..self.sources.count {
            let t0 = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            let mut x0: Vec<f64> = (0..self.field.dim).map(|_| rng.gen_range(0.0..cell)).collect();
            x0[0] += j as f64 * stride;
            out.push(Source { t0, x0 });
        }
        Ok(out)
    }

    pub fn bump_radius(&self) -> f64 {
        self.front.delta.unwrap_or(DEFAULT_DELTA_CELLS * self.front.h)
    }
}
