use std::process::Command;

use approx::assert_relative_eq;
use gcoerce::experiments::{
    average_ranks, correlate_t_rstar, correlate_t_rstar_with, phi_domination_check, read_records_csv, run_ensemble,
    spearman, tail_curve, tail_curve_from_samples, verify_suite, wilson_interval, write_records_csv, DominationStatus,
    EnsembleSummary, ExperimentConfig, ExperimentError, TailSample,
};
use gcoerce::frontier::{Source, WaitingTimeRecord};
use gcoerce::theory::{default_lambda1, theorem_parameters, TheoremParams};

fn record(seed: u64, t: Option<f64>, r_star: Option<f64>) -> WaitingTimeRecord {
    WaitingTimeRecord {
        seed,
        source: Source {
            t0: 0.25 * seed as f64,
            x0: vec![0.5, -1.0 / 3.0],
        },
        c: 0.2,
        waiting_time: t,
        censored: t.is_none(),
        r_star,
        r_star_censored: false,
        horizon: 2.0,
        times: Vec::new(),
        volume: Vec::new(),
        inscribed_radius: Vec::new(),
    }
}

#[test]
fn proportional_waiting_times_correlate_perfectly() {
    let records: Vec<_> = (0..20)
        .map(|i| {
            let r = 0.1 + 0.37 * i as f64;
            record(i, Some(2.5 * r), Some(r))
        })
        .collect();
    let c = correlate_t_rstar(&records).unwrap();
    assert_eq!(c.samples, 20);
    assert_eq!(c.excluded, 0);
    assert_relative_eq!(c.spearman, 1.0, epsilon = 1e-12);
    assert_relative_eq!(c.slope, 2.5, epsilon = 1e-12);
    assert!(c.p_value < 1e-3);
}

#[test]
fn constant_waiting_times_do_not_correlate() {
    let records: Vec<_> = (0..15).map(|i| record(i, Some(1.0), Some(i as f64))).collect();
    let c = correlate_t_rstar_with(&records, 199, 3).unwrap();
    assert_eq!(c.spearman, 0.0);
    assert_eq!(c.p_value, 1.0);
}

#[test]
fn censored_records_are_excluded_and_too_few_is_an_error() {
    let mut records: Vec<_> = (0..12).map(|i| record(i, Some(i as f64), Some(i as f64))).collect();
    records.push(record(12, None, Some(1.0)));
    records.push(record(13, Some(1.0), None));
    let c = correlate_t_rstar_with(&records, 99, 0).unwrap();
    assert_eq!((c.samples, c.excluded), (12, 2));

    let err = correlate_t_rstar(&records[..9]).unwrap_err();
    assert!(matches!(err, ExperimentError::TooFewSamples { needed: 10, got: 9 }));
    assert!(err.is_usage());
}

#[test]
fn ranks_average_over_ties() {
    assert_eq!(average_ranks(&[3.0, 1.0, 2.0, 2.0]), vec![4.0, 1.0, 2.5, 2.5]);
    assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
}

fn params() -> TheoremParams {
    theorem_parameters(2.0, 2, 1.0, 1.0, default_lambda1(2)).unwrap()
}

fn curve(r: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.01).collect();
    let vols = times.iter().map(|t| r * r * f(*t)).collect();
    (times, vols)
}

#[test]
fn curve_above_phi_is_dominated() {
    let p = params();
    let phi = p.phi();
    let r = 0.5;
    let (times, vols) = curve(r, |t| if t < 0.5 { 0.0 } else { (p.alpha + phi.value((t - 0.5) / r)).min(1.0) });
    let rep = phi_domination_check(&times, &vols, r, &p).unwrap();
    assert_eq!(rep.status, DominationStatus::Passed);
    assert_relative_eq!(rep.t1.unwrap(), 0.5);
    assert!(rep.min_slack.unwrap() >= 0.0);
    assert_eq!(rep.t2_within_bound, Some(true));
}

#[test]
fn curve_that_stalls_fails_domination() {
    let p = params();
    let r = 0.5;
    let (times, vols) = curve(r, |t| if t < 0.5 { 0.0 } else { p.alpha });
    let rep = phi_domination_check(&times, &vols, r, &p).unwrap();
    assert_eq!(rep.status, DominationStatus::Failed);
    assert!(rep.min_slack.unwrap() < 0.0);
    assert!(!rep.passed());
}

#[test]
fn curve_below_alpha_never_starts() {
    let p = params();
    let r = 0.5;
    let (times, vols) = curve(r, |_| 0.5 * p.alpha);
    let rep = phi_domination_check(&times, &vols, r, &p).unwrap();
    assert_eq!(rep.status, DominationStatus::T1NotReached);
    assert!(rep.t1.is_none());
    assert!(phi_domination_check(&times[..3], &vols, r, &p).is_err());
}

#[test]
fn slow_crossing_violates_the_t2_bound() {
    let p = params();
    let r = 0.1;
    let hi = 1.0 - p.alpha / 4.0;
    let (times, vols) = curve(r, |t| if t < 0.5 { 0.0 } else if t < 3.9 { hi - 1e-3 } else { 1.0 });
    let rep = phi_domination_check(&times, &vols, r, &p).unwrap();
    assert_eq!(rep.t2_within_bound, Some(false));
    assert_eq!(rep.status, DominationStatus::Failed);
}

#[test]
fn identical_waiting_times_skip_the_fit() {
    let samples = vec![
        TailSample {
            value: Some(0.7),
            horizon: 2.0
        };
        30
    ];
    let c = tail_curve_from_samples(&samples, &[0.0, 0.5, 0.7, 1.0]).unwrap();
    assert!(c.fit.is_none());
    assert!(c.fit_skipped.is_some());
    assert_eq!(c.survival, vec![1.0, 1.0, 1.0, 0.0]);
}

#[test]
fn survival_starts_at_one_and_counts_censored_samples_up_to_the_horizon() {
    let mut samples: Vec<TailSample> = (1..=8)
        .map(|i| TailSample {
            value: Some(0.1 * i as f64),
            horizon: 2.0,
        })
        .collect();
    samples.extend([TailSample {
        value: None,
        horizon: 1.0,
    }; 2]);
    let c = tail_curve_from_samples(&samples, &[0.0, 0.45, 1.0, 1.5]).unwrap();
    assert_eq!(c.survival, vec![1.0, 0.6, 0.2, 0.0]);
    assert_eq!(c.censored, 2);
    for i in 0..4 {
        assert!(c.lower[i] <= c.survival[i] && c.survival[i] <= c.upper[i]);
    }
    let fit = c.fit.unwrap();
    assert_eq!(fit.points, 8);
    assert_relative_eq!(fit.rate, fit.length_scale.powf(-fit.exponent), max_relative = 1e-12);
}

#[test]
fn tail_curve_reads_records() {
    let records = vec![record(0, Some(1.0), Some(1.0)), record(1, None, Some(1.0))];
    let c = tail_curve(&records, &[0.5, 1.5, 2.5]).unwrap();
    assert_eq!(c.survival, vec![1.0, 0.5, 0.0]);
    assert!(tail_curve(&[], &[0.0]).is_err());
    assert!(tail_curve(&records, &[1.0, 0.0]).is_err());
}

#[test]
fn wilson_interval_matches_the_closed_form() {
    let (lo, hi) = wilson_interval(5, 10);
    let z: f64 = 1.959_963_984_540_054;
    let half = z * (0.25 / 10.0 + z * z / 400.0).sqrt() / (1.0 + z * z / 10.0);
    assert_relative_eq!(lo, 0.5 - half, epsilon = 1e-14);
    assert_relative_eq!(hi, 0.5 + half, epsilon = 1e-14);
    assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    assert_eq!(wilson_interval(0, 20).0, 0.0);
    assert_eq!(wilson_interval(20, 20).1, 1.0);
}

#[test]
fn records_survive_a_csv_round_trip() {
    let mut records: Vec<_> = (0..5).map(|i| record(i, Some(0.1 + i as f64 / 7.0), Some(1.0 / 3.0))).collect();
    records.push(record(5, None, None));
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &records).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("seed,t0,x0_0,x0_1,c,T,censored,r_star,horizon\n"));
    let back = read_records_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.source, b.source);
        assert_eq!(a.waiting_time, b.waiting_time);
        assert_eq!(a.censored, b.censored);
        assert_eq!(a.r_star, b.r_star);
        assert_eq!(a.horizon, b.horizon);
    }
}

const SMALL: &str = r#"
[field]
kind = "random_fourier"
M = 2.0

[front]
h = 0.0625
cfl = 0.7

[sources]
count = 2

[waiting]
c = [0.2, 0.5]
horizon = 1.0
n_samples = 10
box_sides = [0.5]

[seeds]
start = 4
count = 2
"#;

#[test]
fn config_defaults_and_unknown_keys() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    assert_eq!(cfg.field.dim, 2);
    assert_eq!(cfg.field.n_modes, 8);
    assert_eq!(cfg.front.threshold, 0.5);
    assert_eq!(cfg.seeds.seeds().collect::<Vec<_>>(), vec![4, 5]);
    assert!(cfg.stats.is_none());

    let typo = SMALL.replace("n_samples", "samples");
    assert!(ExperimentConfig::from_toml_str(&typo).is_err());
    let bad_c = SMALL.replace("c = [0.2, 0.5]", "c = [1.5]");
    assert!(matches!(
        ExperimentConfig::from_toml_str(&bad_c).and_then(|c| c.validate()),
        Err(ExperimentError::Config(_))
    ));
}

#[test]
fn random_sources_are_separated_and_reproducible() {
    let cfg = ExperimentConfig::from_toml_str(&SMALL.replace("count = 2\n\n[waiting]", "count = 4\n\n[waiting]")).unwrap();
    let a = cfg.sources_for_seed(7, 1.0).unwrap();
    assert_eq!(a, cfg.sources_for_seed(7, 1.0).unwrap());
    assert_ne!(a, cfg.sources_for_seed(8, 1.0).unwrap());
    assert_eq!(a.len(), 4);
    let spacing = cfg.source_spacing(1.0);
    for i in 0..a.len() {
        assert!((0.0..10.0).contains(&a[i].t0));
        for j in 0..i {
            let dx = (a[i].x0[0] - a[j].x0[0]).hypot(a[i].x0[1] - a[j].x0[1]);
            assert!(dx >= spacing || (a[i].t0 - a[j].t0).abs() >= spacing);
        }
    }
}

#[test]
fn ensemble_summary_counts_censoring() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let run = run_ensemble(&cfg).unwrap();
    assert_eq!(run.samples.len(), 4);
    let records = run.records();
    assert_eq!(records.len(), 8);
    let summary = EnsembleSummary::from_run(&run, &[0.2, 0.5]);
    assert_eq!(summary.sources, 4);
    assert_eq!(summary.by_c.len(), 2);
    for s in &summary.by_c {
        assert_eq!(s.records, 4);
        let censored = records.iter().filter(|r| r.c == s.c && r.censored).count();
        assert_eq!(s.censored, censored);
    }
    assert_eq!(summary.by_c[1].censored >= summary.by_c[0].censored, true);
    assert_eq!(run_ensemble(&cfg).unwrap().records(), records);
}

#[test]
fn broken_cfl_fails_only_the_cfl_check() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
[field]
kind = "zero"

[front]
h = 0.03125
cfl = 0.9

[verify]
oracle_refine = 3
"#,
    )
    .unwrap();
    let report = verify_suite(&cfg).unwrap();
    assert!(!report.passed);
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert_eq!(failed, vec!["cfl"]);
}

#[test]
fn zero_field_suite_passes() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
[field]
kind = "zero"

[front]
h = 0.03125

[waiting]
c = [0.5]
horizon = 1.0
n_samples = 20

[verify]
oracle_refine = 3
"#,
    )
    .unwrap();
    let report = verify_suite(&cfg).unwrap();
    for c in &report.checks {
        assert!(c.passed, "{} failed: value {} bound {} ({})", c.name, c.value, c.bound, c.detail);
    }
    assert!(report.passed);
    assert!(report.checks.iter().any(|c| c.name == "perimeter_bound"));
}

fn gcoerce(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gcoerce")).args(args).output().unwrap()
}

#[test]
fn params_exit_codes() {
    let accepted = gcoerce(&["params", "--M", "2"]);
    assert_eq!(accepted.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&accepted.stdout).unwrap();
    assert_eq!(json["accepted"], true);
    assert_eq!(json["params"]["M"], 2.0);

    let rejected = gcoerce(&["params", "--M", "1"]);
    assert_eq!(rejected.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&rejected.stdout).unwrap();
    assert_eq!(json["accepted"], false);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gcoerce(&["stats", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[field]\nkind = \"vortex\"\n").unwrap();
    let out = gcoerce(&["gen-field", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_and_tails_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[field]
kind = "shear"
M = 1.0

[stats]
N = 2
epsilon = 0.1
r_min = 0.25
r_max = 4.0
n_r = 9
q = 8
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let s = gcoerce(&["stats", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let csv = std::fs::read_to_string(out.join("stats.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);

    let records: Vec<_> = (0..12).map(|i| record(i, Some(0.05 * (i + 1) as f64), Some(1.0))).collect();
    let input = dir.path().join("w.csv");
    write_records_csv(std::fs::File::create(&input).unwrap(), &records).unwrap();
    let t = gcoerce(&[
        "tails",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let tails: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("tails.json")).unwrap()).unwrap();
    assert_eq!(tails["samples"], 12);
    assert_eq!(tails["survival"][0], 1.0);
}
