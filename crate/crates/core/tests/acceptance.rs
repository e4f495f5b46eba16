//! End-to-end acceptance criteria. Each criterion prints one line; the test
//! fails if any criterion fails.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};

use gcoerce::experiments::{
    ball_check, correlate_t_rstar, oracle_agreement, phi_domination_for_trace, run_ensemble, spearman,
    tail_curve_from_samples, ExperimentConfig, TailSample,
};
use gcoerce::field::{RandomFourierParams, VelocityField};
use gcoerce::frontier::{trace_reachable, FrontSettings, FrontTrace, OracleSettings, SchemeParams, Source};
use gcoerce::stats::{check_face_flux_lemma, net_outward_flux, r_star, RStarSpec};
use gcoerce::theory::{default_lambda1, theorem_parameters, Phi};

struct Outcome {
    passed: bool,
    detail: String,
}

fn report(results: &mut Vec<(usize, &'static str, bool)>, id: usize, name: &'static str, outcome: Outcome) {
    let mark = if outcome.passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout();
    writeln!(out, "criterion {id:>2} [{mark}] {name}: {}", outcome.detail).unwrap();
    out.flush().unwrap();
    results.push((id, name, outcome.passed));
}

const H_FINE: f64 = 1.0 / 128.0;
const X0: [f64; 2] = [0.1, 0.15];

fn exact_ball_growth() -> Outcome {
    let t = 0.5;
    let start = Instant::now();
    let b = ball_check(&[0.0, 0.0], &X0, t, H_FINE, 2.0 * H_FINE, SchemeParams::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let vol_err = (b.volume_ratio - 1.0).abs();
    let rad_err = (b.inscribed_radius - t).abs();
    Outcome {
        passed: vol_err <= 0.05 && rad_err <= 2.0 * H_FINE && secs <= 60.0,
        detail: format!(
            "|R_t|/(π t²) - 1 = {:+.4} (≤ 0.05), |ρ - t| = {:.2}h (≤ 2h), {secs:.2}s (≤ 60s)",
            b.volume_ratio - 1.0,
            rad_err / H_FINE
        ),
    }
}

fn constant_drift() -> Outcome {
    let b = ball_check(&[0.5, 0.0], &X0, 0.5, H_FINE, 2.0 * H_FINE, SchemeParams::default()).unwrap();
    Outcome {
        passed: b.hausdorff <= 2.0 * H_FINE,
        detail: format!("Hausdorff distance to B_t(x0 + vt) = {:.2}h (≤ 2h)", b.hausdorff / H_FINE),
    }
}

fn oracle_equivalence() -> Outcome {
    let field = VelocityField::cellular(2.0, 1.0).unwrap();
    let source = Source {
        t0: 0.0,
        x0: X0.to_vec(),
    };
    let settings = OracleSettings {
        laminar_speed: 1.0,
        n_controls: 32,
        n_substeps: 30,
        refine: 8,
    };
    let o = oracle_agreement(&field, &source, 0.3, 9, &settings, 0.5).unwrap();
    Outcome {
        passed: o.ratio <= 0.1,
        detail: format!("|oracle Δ level set| / |union| = {:.4} (≤ 0.1) on the 128² grid", o.ratio),
    }
}

fn divergence_theorem() -> Outcome {
    let mut fields = vec![
        ("zero", VelocityField::zero(2).unwrap()),
        ("constant", VelocityField::constant(&[0.3, -0.7]).unwrap()),
        ("shear", VelocityField::shear(3.0, &[1.0, 2.0]).unwrap()),
        ("cellular", VelocityField::cellular(2.0, 1.0).unwrap()),
        ("shear-3d", VelocityField::shear(1.5, &[0.0, 1.0, 2.0]).unwrap()),
        ("zero-3d", VelocityField::zero(3).unwrap()),
    ];
    for (dim, seed) in [(2, 0), (2, 1), (3, 2)] {
        let f = VelocityField::random_fourier(&RandomFourierParams {
            dim,
            amplitude_bound: 4.0,
            seed,
            ..Default::default()
        })
        .unwrap();
        fields.push(("random_fourier", f));
    }
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for (_, f) in &fields {
        let dim = f.dim();
        let center: Vec<f64> = (0..dim).map(|a| 0.13 + 0.21 * a as f64).collect();
        let side: f64 = 0.77;
        let surface = 2.0 * dim as f64 * side.powi(dim as i32 - 1);
        let flux = net_outward_flux(f, 0.4, &center, side, 64).unwrap().abs();
        let bound = 1e-8 * f.amplitude_bound() * surface;
        passed &= flux <= bound;
        if bound > 0.0 {
            worst = worst.max(flux / bound);
        } else if flux > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Outcome {
        passed,
        detail: format!(
            "{} fields, largest |net flux| / (1e-8 M |∂box|) = {worst:.2e} (≤ 1)",
            fields.len()
        ),
    }
}

const ENSEMBLE: &str = r#"
out_dir = "unused"

[field]
kind = "random_fourier"
M = 4.0
n_modes = 8
max_wavenumber = 1
time_scale = 1.0
period = 1.0

[front]
h = 0.03125
cfl = 0.7

[sources]
count = 5
t0_range = [0.0, 10.0]

[waiting]
c = [0.2]
horizon = 2.0
n_samples = 40
box_sides = [0.5, 1.0]

[stats]
N = 1
epsilon = 1.0
r_min = 0.03125
r_max = 8.0
n_r = 65
q = 16

[seeds]
start = 0
count = 20
"#;

fn volume_growth(traces: &[FrontTrace]) -> Outcome {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for tr in traces {
        let min_radius = 20.0 * tr.h;
        violations += tr.volume_growth_violations(0.9, min_radius).len();
        for k in 0..tr.times.len() {
            let rho = tr.laminar_speed * (tr.times[k] - tr.source.t0);
            if rho >= min_radius {
                worst = worst.min(tr.volume[k] / (std::f64::consts::PI * rho * rho));
            }
        }
    }
    Outcome {
        passed: violations == 0,
        detail: format!(
            "{violations} violations over {} runs; smallest |R_t| / (π (A(t-t0))²) = {worst:.3} (≥ 0.9)",
            traces.len()
        ),
    }
}

fn containment(traces: &[FrontTrace]) -> Outcome {
    let violations: usize = traces.iter().map(|t| t.containment_violations().len()).sum();
    Outcome {
        passed: violations == 0,
        detail: format!("{violations} violations of R_t ⊂ B_((A+M)(t-t0)+δ+2h) over {} runs", traces.len()),
    }
}

fn lower_continuity(traces: &[FrontTrace]) -> Outcome {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for tr in traces {
        let k_max = 4.0 * tr.dim as f64;
        if tr.amplitude_bound > 0.0 {
            violations += tr.lower_continuity_violations(k_max).len();
            worst = tr.lower_continuity_constants().into_iter().fold(worst, f64::max);
        } else {
            violations += tr.lower_continuity_violations(0.0).len();
        }
    }
    Outcome {
        passed: violations == 0,
        detail: format!(
            "{violations} violations of Δ|Box_r ∩ R_t|/Δt ≥ -4d M r^(d-1) over {} runs; largest K = {worst:.3}",
            traces.len()
        ),
    }
}

fn waiting_times(run: &gcoerce::experiments::EnsembleRun) -> Outcome {
    let records = run.records();
    let uncensored = records.iter().filter(|r| !r.censored).count();
    let frac = uncensored as f64 / records.len() as f64;
    match correlate_t_rstar(&records) {
        Ok(c) => Outcome {
            passed: frac >= 0.9 && c.spearman > 0.5 && c.p_value < 0.05,
            detail: format!(
                "{uncensored}/{} uncensored (≥ 90%), Spearman(T, r*) = {:.3} (> 0.5), permutation p = {:.4} (< 0.05)",
                records.len(),
                c.spearman,
                c.p_value
            ),
        },
        Err(e) => Outcome {
            passed: false,
            detail: format!("{uncensored}/{} uncensored; correlation failed: {e}", records.len()),
        },
    }
}

fn e_n_spec() -> RStarSpec {
    RStarSpec {
        n: 4,
        epsilon: 0.1,
        r_min: 1.0,
        r_max: 8.0,
        n_r: 25,
        q: 16,
    }
}

fn e_n_field(seed: u64) -> VelocityField {
    VelocityField::random_fourier(&RandomFourierParams {
        amplitude_bound: 2.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn e_n_decay() -> Outcome {
    let spec = e_n_spec();
    let mut uncensored = 0;
    let mut worst_rho = f64::NEG_INFINITY;
    for seed in 0..20 {
        let st = r_star(&e_n_field(seed), 0.0, &[0.0, 0.0], &spec).unwrap();
        if !st.censored {
            uncensored += 1;
        }
        worst_rho = worst_rho.max(spearman(&st.r_values, &st.e_n_values));
    }
    Outcome {
        passed: uncensored == 20 && worst_rho <= -0.8,
        detail: format!(
            "r* uncensored for {uncensored}/20 seeds at r_max = 8 periods; largest Spearman(r, E_N) over r ∈ [1, 8] periods = {worst_rho:.3} (≤ -0.8)"
        ),
    }
}

fn face_flux_ratio() -> Outcome {
    let spec = e_n_spec();
    let mut worst_growth: f64 = 0.0;
    let mut largest: f64 = 0.0;
    let mut passed = true;
    for seed in 0..10 {
        let field = e_n_field(seed);
        let st = r_star(&field, 0.0, &[0.0, 0.0], &spec).unwrap();
        if st.censored || st.r_star <= 0.0 {
            passed = false;
            continue;
        }
        let ratios: Vec<f64> = (0..=16)
            .map(|k| {
                let r = st.r_star * 2f64.powf(k as f64 / 8.0);
                check_face_flux_lemma(&field, 0.0, &[0.0, 0.0], r, spec.n, 2, spec.epsilon, st.r_star, 32)
                    .unwrap()
                    .max_ratio
            })
            .collect();
        let first = ratios[..=8].iter().cloned().fold(0.0, f64::max);
        let second = ratios[8..].iter().cloned().fold(0.0, f64::max);
        let growth = second / first;
        worst_growth = worst_growth.max(growth);
        largest = ratios.iter().cloned().fold(largest, f64::max);
    }
    passed &= worst_growth <= 2.0;
    Outcome {
        passed,
        detail: format!(
            "r ∈ [r*, 4r*], N = 4, L = 2, 10 seeds: largest ratio {largest:.3}, max over [2r*, 4r*] / max over [r*, 2r*] ≤ {worst_growth:.3} (≤ 2)"
        ),
    }
}

fn phi_closed_form() -> Outcome {
    let phi = Phi::new(2, default_lambda1(2)).unwrap();
    let exact = phi.value(0.0) == 0.0 && phi.value(phi.b) == 0.5 && phi.value(2.0 * phi.b) == 1.0;
    let fd = 1e-5;
    let residual = (1..40)
        .map(|i| 2.0 * phi.b * i as f64 / 40.0)
        .filter(|t| (t - phi.b).abs() > 2.0 * fd)
        .map(|t| phi.ode_residual(t, fd))
        .fold(0.0, f64::max);
    Outcome {
        passed: exact && residual <= 1e-6,
        detail: format!(
            "φ(0) = {}, φ(b) = {}, φ(2b) = {}; largest ODE residual {residual:.2e} (≤ 1e-6)",
            phi.value(0.0),
            phi.value(phi.b),
            phi.value(2.0 * phi.b)
        ),
    }
}

fn zero_field_trace() -> FrontTrace {
    let r = 64.0 * H_FINE;
    let settings = FrontSettings {
        h: H_FINE,
        delta: Some(2.0 * H_FINE),
        scheme: SchemeParams::default(),
        threshold: 0.5,
    };
    let source = Source {
        t0: 0.0,
        x0: X0.to_vec(),
    };
    let horizon = r * 2f64.sqrt() / 2.0 + 4.0 * H_FINE;
    trace_reachable(&VelocityField::zero(2).unwrap(), &source, horizon, 64, &settings, &[r]).unwrap()
}

fn phi_domination(trace: &FrontTrace) -> Outcome {
    let params = theorem_parameters(2.0, 2, 1.0, 1.0, default_lambda1(2)).unwrap();
    let rep = phi_domination_for_trace(trace, 0, &params).unwrap();
    let dt = rep.t2.zip(rep.t1).map(|(b, a)| b - a).unwrap_or(f64::NAN);
    Outcome {
        passed: rep.passed(),
        detail: format!(
            "r = 64h: min slack {:.4} (≥ 0), t2 - t1 = {dt:.4} (≤ 2d r/λ₁ = {:.4})",
            rep.min_slack.unwrap_or(f64::NAN),
            rep.t2_bound
        ),
    }
}

fn tail_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let w = Weibull::new(1.0, 0.75).unwrap();
    let samples: Vec<TailSample> = (0..200)
        .map(|_| TailSample {
            value: Some(w.sample(&mut rng)),
            horizon: f64::INFINITY,
        })
        .collect();
    let curve = tail_curve_from_samples(&samples, &[0.0, 1.0, 2.0]).unwrap();
    match curve.fit {
        Some(fit) => Outcome {
            passed: (fit.exponent - 0.75).abs() <= 0.1,
            detail: format!("fitted exponent {:.4} (0.75 ± 0.1) from 200 samples", fit.exponent),
        },
        None => Outcome {
            passed: false,
            detail: format!("fit skipped: {:?}", curve.fit_skipped),
        },
    }
}

const DETERMINISM: &str = r#"
[field]
kind = "random_fourier"
M = 2.0

[front]
h = 0.0625
cfl = 0.7

[sources]
count = 2

[waiting]
c = [0.2, 0.4]
horizon = 1.0
n_samples = 10

[stats]
N = 2
epsilon = 0.5
r_min = 0.125
r_max = 4.0
n_r = 17
q = 8

[seeds]
start = 3
count = 3
"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, DETERMINISM).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_gcoerce"))
            .args(["waiting-time", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome {
                passed: false,
                detail: format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)),
            };
        }
        outputs.push(std::fs::read(out.join("waiting_times.csv")).unwrap());
    }
    let rows = outputs[0].iter().filter(|b| **b == b'\n').count();
    Outcome {
        passed: outputs[0] == outputs[1] && rows > 1,
        detail: format!(
            "two `gcoerce waiting-time` runs, {} bytes / {rows} lines each, byte-identical: {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    report(&mut results, 1, "exact ball growth", exact_ball_growth());
    report(&mut results, 2, "constant-drift translation", constant_drift());
    report(&mut results, 3, "oracle equivalence", oracle_equivalence());
    report(&mut results, 4, "divergence theorem", divergence_theorem());

    let config = ExperimentConfig::from_toml_str(ENSEMBLE).unwrap();
    let run = run_ensemble(&config).unwrap();
    let zero = zero_field_trace();
    let mut traces: Vec<FrontTrace> = run.traces().cloned().collect();
    traces.push(zero.clone());

    report(&mut results, 5, "volume growth inequality", volume_growth(&traces[..traces.len() - 1]));
    report(&mut results, 6, "speed-bound containment", containment(&traces));
    report(&mut results, 7, "E_N decay and finite r*", e_n_decay());
    report(&mut results, 8, "face-flux lemma ratio", face_flux_ratio());
    report(&mut results, 9, "waiting-time finiteness and correlation", waiting_times(&run));
    report(&mut results, 10, "φ closed form", phi_closed_form());
    report(&mut results, 11, "φ-domination", phi_domination(&zero));
    report(&mut results, 12, "lower continuity", lower_continuity(&traces));
    report(&mut results, 13, "tail-fit round trip", tail_fit());
    report(&mut results, 14, "determinism", determinism());

    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.2)
        .map(|r| format!("{} ({})", r.0, r.1))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
