//! The invariant checks behind `gcoerce verify`.

use serde::{Deserialize, Serialize};

use super::analysis::phi_domination_for_trace;
use super::config::ExperimentConfig;
use super::ensemble::run_ensemble;
use super::{ExperimentError, REPORT_SCHEMA_VERSION};
use crate::field::{sup_norm_estimate, verify_divergence_free, VelocityField};
use crate::frontier::{
    evolve, front_level, hausdorff_to_sphere, inscribed_ball_radius, level_crossings, reachable_indicator,
    symmetric_difference, trace_reachable, trajectory_oracle_with, volume, FrontSettings, GridSpec, LevelSetState,
    OracleSettings, SchemeParams, Source,
};
use crate::stats::{net_outward_flux, r_star, SpaceTimeBox};
use crate::theory::{default_lambda1, theorem_parameters, unit_ball_volume, Phi};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: value <= bound,
            value,
            bound,
            detail: detail.into(),
        }
    }

    fn error(name: &str, err: impl std::fmt::Display) -> Self {
        Check {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            bound: f64::NAN,
            detail: err.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Outcome of evolving a point source in a constant field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallCheck {
    pub expected_radius: f64,
    pub center: Vec<f64>,
    /// `|R_t| / (ω_d (A t)^d)`
    pub volume_ratio: f64,
    /// Inscribed radius about the drifted center.
    pub inscribed_radius: f64,
    /// Hausdorff distance between the front and the exact sphere.
    pub hausdorff: f64,
}

/// Evolves a bump of radius `delta` from `x0` in the constant field
/// `velocity` for time `t` and compares with the ball `B_{At}(x0 + v t)`.
pub fn ball_check(
    velocity: &[f64],
    x0: &[f64],
    t: f64,
    h: f64,
    delta: f64,
    scheme: SchemeParams,
) -> Result<BallCheck, ExperimentError> {
    let dim = x0.len();
    let field = if velocity.iter().all(|v| *v == 0.0) {
        VelocityField::zero(dim)?
    } else {
        VelocityField::constant(velocity)?
    };
    let speed = scheme.laminar_speed + field.amplitude_bound();
    let grid = GridSpec::for_horizon(dim, h, speed, t, delta, x0)?;
    let state = LevelSetState::point_source(
        grid,
        Source {
            t0: 0.0,
            x0: x0.to_vec(),
        },
        delta,
        scheme,
    )?;
    let out = evolve(&state, &field, t, &[])?;
    let last = &out[0];
    let rs = reachable_indicator(last, 0.5)?;
    let center: Vec<f64> = x0.iter().zip(velocity).map(|(x, v)| x + v * t).collect();
    let radius = scheme.laminar_speed * t;
    Ok(BallCheck {
        expected_radius: radius,
        volume_ratio: volume(&rs, None) / (unit_ball_volume(dim) * radius.powi(dim as i32)),
        inscribed_radius: inscribed_ball_radius(&rs, &center),
        hausdorff: hausdorff_to_sphere(&level_crossings(last, front_level(last, 0.5)), &center, radius, 720),
        center,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAgreement {
    pub h: f64,
    pub symmetric_difference: f64,
    pub union: f64,
    /// `|oracle Δ level set| / |oracle ∪ level set|`
    pub ratio: f64,
    pub oracle_volume: f64,
    pub level_set_volume: f64,
}

/// Compares the trajectory oracle on a 128-cell grid of spacing
/// `(2 (A + M) t + 0.1) / 128` with the level-set reachable set computed
/// `refine` times finer and coarsened by majority onto the same grid.
/// `refine` must be odd so the two grids share cell faces.
pub fn oracle_agreement(
    field: &VelocityField,
    source: &Source,
    t: f64,
    refine: usize,
    oracle: &OracleSettings,
    cfl: f64,
) -> Result<OracleAgreement, ExperimentError> {
    if refine == 0 || refine % 2 == 0 {
        return Err(ExperimentError::Config(format!("oracle refinement must be odd, got {refine}")));
    }
    let dim = field.dim();
    let a = oracle.laminar_speed;
    let speed = a + field.amplitude_bound();
    let n = 128;
    let h = (2.0 * speed * t + 0.1) / n as f64;
    let og = GridSpec::centered(dim, n, h, &source.x0)?;
    let o = trajectory_oracle_with(field, source, source.t0 + t, &og, oracle)?;
    let hf = h / refine as f64;
    let delta = 4.0 * hf;
    let grid = GridSpec::for_horizon(dim, hf, speed, t, delta, &source.x0)?;
    let scheme = SchemeParams {
        laminar_speed: a,
        cfl_safety: cfl,
    };
    let state = LevelSetState::point_source(grid, source.clone(), delta, scheme)?;
    let out = evolve(&state, field, source.t0 + t, &[])?;
    let ls = reachable_indicator(&out[0], 0.5)?.coarsen(&og)?;
    let (d, u) = symmetric_difference(&o, &ls)?;
    Ok(OracleAgreement {
        h,
        symmetric_difference: d,
        union: u,
        ratio: if u > 0.0 { d / u } else { 0.0 },
        oracle_volume: volume(&o, None),
        level_set_volume: volume(&ls, None),
    })
}

/// Runs every check and never stops at the first failure.
pub fn verify_suite(config: &ExperimentConfig) -> Result<VerifyReport, ExperimentError> {
    config.validate()?;
    let mut checks = Vec::new();
    let spec = &config.field;
    let dim = spec.dim;
    let field = spec.build(spec.seed)?;
    let m = field.amplitude_bound();
    let ell = spec.length_scale();
    let center: Vec<f64> = (0..dim).map(|a| 0.1 + 0.05 * a as f64).collect();

    let region = SpaceTimeBox::new(0.3, &center, ell)?;
    let div = verify_divergence_free(&field, &region, ell / 64.0);
    checks.push(Check::at_most(
        "divergence_free",
        div,
        1e-2 * m / ell,
        "max central-difference divergence at h = L/64",
    ));

    let side = 0.7 * ell;
    let surface = 2.0 * dim as f64 * side.powi(dim as i32 - 1);
    match net_outward_flux(&field, 0.3, &center, side, 64) {
        Ok(flux) => checks.push(Check::at_most(
            "divergence_theorem",
            flux.abs(),
            1e-8 * m * surface,
            "net outward flux through a closed box, q = 64",
        )),
        Err(e) => checks.push(Check::error("divergence_theorem", e)),
    }

    let sup = sup_norm_estimate(&field, &region);
    checks.push(Check::at_most(
        "sup_norm",
        sup,
        m * (1.0 + 1e-6),
        "sampled sup |V| against the declared bound",
    ));

    if let Some(stats) = &config.stats {
        let point = stats.center_point.clone().unwrap_or_else(|| center.clone());
        let s = stats.spec();
        let mut doubled = s.clone();
        doubled.epsilon *= 2.0;
        match (
            r_star(&field, stats.center_time, &point, &s),
            r_star(&field, stats.center_time, &point, &doubled),
        ) {
            (Ok(a), Ok(b)) => {
                let worst = a.e_n_values.iter().fold(0.0, |x: f64, y| x.max(*y));
                checks.push(Check::at_most(
                    "e_n_bounded",
                    worst,
                    m * (1.0 + 1e-6),
                    "largest E_N over the radius grid",
                ));
                checks.push(Check {
                    name: "r_star_monotone_in_epsilon".into(),
                    passed: a.r_star >= b.r_star,
                    value: b.r_star,
                    bound: a.r_star,
                    detail: "r* at 2ε against r* at ε".into(),
                });
            }
            (Err(e), _) | (_, Err(e)) => checks.push(Check::error("e_n_bounded", e)),
        }
    }

    let scheme = config.front.settings().scheme;
    checks.push(match scheme.validate(dim) {
        Ok(()) => Check::at_most("cfl", scheme.cfl_safety, 1.0 / (dim as f64).sqrt(), "CFL safety factor"),
        Err(e) => Check {
            name: "cfl".into(),
            passed: false,
            value: scheme.cfl_safety,
            bound: 1.0 / (dim as f64).sqrt(),
            detail: e.to_string(),
        },
    });

    let v = config.verify.clone();
    let exact_scheme = SchemeParams {
        laminar_speed: 1.0,
        cfl_safety: scheme.cfl_safety.min(0.5),
    };
    if dim == 2 {
        match ball_check(&[0.0, 0.0], &[0.1, 0.15], v.exact_t, v.exact_h, 2.0 * v.exact_h, exact_scheme) {
            Ok(b) => {
                checks.push(Check::at_most(
                    "exact_ball_volume",
                    (b.volume_ratio - 1.0).abs(),
                    0.05,
                    format!("zero field, h = {}, t = {}", v.exact_h, v.exact_t),
                ));
                checks.push(Check::at_most(
                    "exact_ball_inscribed_radius",
                    (b.inscribed_radius - b.expected_radius).abs(),
                    2.0 * v.exact_h,
                    "inscribed radius against A t",
                ));
            }
            Err(e) => checks.push(Check::error("exact_ball_volume", e)),
        }

        let oracle = OracleSettings {
            laminar_speed: config.front.laminar_speed,
            n_controls: 32,
            n_substeps: 30,
            refine: 8,
        };
        let src = Source {
            t0: 0.0,
            x0: center.clone(),
        };
        match oracle_agreement(&field, &src, v.oracle_t, v.oracle_refine, &oracle, exact_scheme.cfl_safety) {
            Ok(o) => checks.push(Check::at_most(
                "oracle_agreement",
                o.ratio,
                0.1,
                "symmetric difference over union, 128-cell oracle grid",
            )),
            Err(e) => checks.push(Check::error("oracle_agreement", e)),
        }

        let h = v.exact_h;
        let r = 64.0 * h;
        let zero = VelocityField::zero(2)?;
        let params = theorem_parameters(m.max(2.0), 2, 1.0, 1.0, default_lambda1(2))?;
        let settings = FrontSettings {
            h,
            delta: Some(2.0 * h),
            scheme: exact_scheme,
            threshold: 0.5,
        };
        let horizon = r * (2f64).sqrt() / 2.0 + 4.0 * h;
        match trace_reachable(&zero, &src, horizon, 64, &settings, &[r])
            .map_err(ExperimentError::from)
            .and_then(|tr| phi_domination_for_trace(&tr, 0, &params))
        {
            Ok(rep) => checks.push(Check {
                name: "phi_domination_zero_field".into(),
                passed: rep.passed(),
                value: rep.min_slack.unwrap_or(f64::NAN),
                bound: 0.0,
                detail: format!("r = 64h, status {:?}", rep.status),
            }),
            Err(e) => checks.push(Check::error("phi_domination_zero_field", e)),
        }
    }

    let phi = Phi::new(dim, default_lambda1(dim))?;
    let exact = phi.value(0.0) == 0.0 && phi.value(phi.b) == 0.5 && phi.value(2.0 * phi.b) == 1.0;
    checks.push(Check {
        name: "phi_closed_form".into(),
        passed: exact,
        value: phi.value(phi.b),
        bound: 0.5,
        detail: "φ(0) = 0, φ(b) = 1/2, φ(2b) = 1".into(),
    });
    let residual = (1..20)
        .map(|i| 2.0 * phi.b * i as f64 / 20.0)
        .filter(|t| (t - phi.b).abs() > 1e-3)
        .map(|t| phi.ode_residual(t, 1e-5))
        .fold(0.0, f64::max);
    checks.push(Check::at_most("phi_ode_residual", residual, 1e-6, "fd_step = 1e-5"));

    if config.waiting.is_some() && dim == 2 {
        let mut small = config.clone();
        small.seeds.count = small.seeds.count.min(v.seeds.max(1));
        small.stats = None;
        let w = small.waiting.as_mut().expect("checked");
        if w.box_sides.is_empty() {
            w.box_sides = vec![0.5 * ell, ell];
        }
        match run_ensemble(&small) {
            Ok(run) => {
                let h = small.front.h;
                let (mut vol, mut contain, mut lower, mut perim) = (0, 0, 0, 0);
                let (mut worst_k, mut worst_perim) = (0.0f64, 0.0f64);
                for tr in run.traces() {
                    vol += tr.volume_growth_violations(0.9, 20.0 * h).len();
                    contain += tr.containment_violations().len();
                    lower += tr.lower_continuity_violations(4.0 * dim as f64).len();
                    perim += tr.perimeter_violations(2.0, 20.0 * h).len();
                    worst_k = tr.lower_continuity_constants().into_iter().fold(worst_k, f64::max);
                    for (k, p) in tr.perimeter_proxy().into_iter().enumerate() {
                        let tau = tr.times[k] - tr.source.t0;
                        let b = tr.perimeter_bound(tau);
                        if tr.laminar_speed * tau >= 20.0 * h && b > 0.0 {
                            worst_perim = worst_perim.max(p / b);
                        }
                    }
                }
                checks.push(Check::at_most("volume_growth", vol as f64, 0.0, "violations of |R_t| ≥ 0.9 ω_d (A(t-t0))^d"));
                checks.push(Check::at_most("containment", contain as f64, 0.0, "violations of the speed bound"));
                checks.push(Check::at_most(
                    "lower_continuity",
                    lower as f64,
                    0.0,
                    format!("violations of K ≤ 4d; largest K = {worst_k}"),
                ));
                checks.push(Check::at_most(
                    "perimeter_bound",
                    perim as f64,
                    0.0,
                    format!("violations with factor-2 slack; largest proxy/bound = {worst_perim}"),
                ));
            }
            Err(e) => checks.push(Check::error("volume_growth", e)),
        }
    }

    Ok(VerifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
