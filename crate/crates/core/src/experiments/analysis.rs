//! Ensemble statistics: rank correlation, φ-domination and tail curves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::frontier::{FrontTrace, WaitingTimeRecord};
use crate::theory::TheoremParams;

pub const MIN_CORRELATION_SAMPLES: usize = 10;
pub const DEFAULT_PERMUTATIONS: usize = 9999;
pub const MIN_FIT_DISTINCT: usize = 5;

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            ranks[*k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; zero when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub samples: usize,
    pub excluded: usize,
    pub spearman: f64,
    /// Two-sided permutation p-value `(1 + #{|ρ_π| ≥ |ρ|}) / (1 + permutations)`.
    pub p_value: f64,
    pub permutations: usize,
    /// Least-squares slope of `T` on `r*` through the origin.
    pub slope: f64,
}

/// Rank correlation of `T` with `r*` over records where both are
/// available and uncensored.
pub fn correlate_t_rstar(records: &[WaitingTimeRecord]) -> Result<CorrelationReport, ExperimentError> {
    correlate_t_rstar_with(records, DEFAULT_PERMUTATIONS, 0)
}

pub fn correlate_t_rstar_with(
    records: &[WaitingTimeRecord],
    permutations: usize,
    seed: u64,
) -> Result<CorrelationReport, ExperimentError> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.censored && !r.r_star_censored)
        .filter_map(|r| Some((r.waiting_time?, r.r_star?)))
        .collect();
    if pairs.len() < MIN_CORRELATION_SAMPLES {
        return Err(ExperimentError::TooFewSamples {
            needed: MIN_CORRELATION_SAMPLES,
            got: pairs.len(),
        });
    }
    let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let rt = average_ranks(&t);
    let mut rr = average_ranks(&r);
    let rho = pearson(&rt, &rr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        rr.shuffle(&mut rng);
        if pearson(&rt, &rr).abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    let srr: f64 = r.iter().map(|x| x * x).sum();
    let slope = if srr > 0.0 {
        t.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / srr
    } else {
        0.0
    };
    Ok(CorrelationReport {
        samples: pairs.len(),
        excluded: records.len() - pairs.len(),
        spearman: rho,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
        permutations,
        slope,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominationStatus {
    Passed,
    Failed,
    T1NotReached,
    T2NotReached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiDominationReport {
    pub r: f64,
    pub status: DominationStatus,
    /// First sample with `|Box_r ∩ R_t| ≥ α r^d`.
    pub t1: Option<f64>,
    /// First sample with `|Box_r ∩ R_t| ≥ (1 - 2^(-d) α) r^d`.
    pub t2: Option<f64>,
    /// `min over t1 ≤ t ≤ t2 of |Box_r ∩ R_t| / r^d - φ((t - t1)/r)`.
    pub min_slack: Option<f64>,
    pub worst_time: Option<f64>,
    /// `(2d / λ₁) r`
    pub t2_bound: f64,
    pub t2_within_bound: Option<bool>,
}

impl PhiDominationReport {
    pub fn passed(&self) -> bool {
        self.status == DominationStatus::Passed
    }
}

/// Slack below which a sample counts as dipping under φ.
pub const DOMINATION_TOLERANCE: f64 = 1e-12;

/// Compares a sampled curve `|Box_r ∩ R_t|` with `r^d φ((t - t1)/r)`.
pub fn phi_domination_check(
    times: &[f64],
    box_volume: &[f64],
    r: f64,
    params: &TheoremParams,
) -> Result<PhiDominationReport, ExperimentError> {
    if times.len() != box_volume.len() || times.is_empty() {
        return Err(ExperimentError::Config(
            "volume curve needs matching, nonempty time and volume samples".into(),
        ));
    }
    if !(r > 0.0) {
        return Err(ExperimentError::Config(format!("box side must be positive, got {r}")));
    }
    let d = params.d as i32;
    let rd = r.powi(d);
    let phi = params.phi();
    let lo = params.alpha * rd;
    let hi = (1.0 - params.alpha / 2f64.powi(d)) * rd;
    let t2_bound = 2.0 * params.d as f64 / params.lambda1 * r;
    let mut report = PhiDominationReport {
        r,
        status: DominationStatus::T1NotReached,
        t1: None,
        t2: None,
        min_slack: None,
        worst_time: None,
        t2_bound,
        t2_within_bound: None,
    };
    let Some(k1) = box_volume.iter().position(|v| *v >= lo) else {
        return Ok(report);
    };
    let t1 = times[k1];
    report.t1 = Some(t1);
    let k2 = box_volume[k1..].iter().position(|v| *v >= hi).map(|k| k + k1);
    let end = k2.unwrap_or(times.len() - 1);
    let mut worst = (f64::INFINITY, t1);
    for k in k1..=end {
        let slack = box_volume[k] / rd - phi.value((times[k] - t1) / r);
        if slack < worst.0 {
            worst = (slack, times[k]);
        }
    }
    report.min_slack = Some(worst.0);
    report.worst_time = Some(worst.1);
    let dominated = worst.0 >= -DOMINATION_TOLERANCE;
    match k2 {
        None => report.status = if dominated { DominationStatus::T2NotReached } else { DominationStatus::Failed },
        Some(k2) => {
            let within = times[k2] - t1 <= t2_bound;
            report.t2 = Some(times[k2]);
            report.t2_within_bound = Some(within);
            report.status = if dominated && within {
                DominationStatus::Passed
            } else {
                DominationStatus::Failed
            };
        }
    }
    Ok(report)
}

/// [`phi_domination_check`] on the trace's box of side `box_sides[index]`.
pub fn phi_domination_for_trace(
    trace: &FrontTrace,
    index: usize,
    params: &TheoremParams,
) -> Result<PhiDominationReport, ExperimentError> {
    let r = *trace
        .box_sides
        .get(index)
        .ok_or_else(|| ExperimentError::Config(format!("trace has no box with index {index}")))?;
    phi_domination_check(&trace.times, &trace.box_volumes[index], r, params)
}

/// Wilson score interval for a binomial proportion at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes >= n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Fit of `S(t) = exp(-(t / ℓ)^β')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub length_scale: f64,
    /// `ℓ^(-β')`, so that `S(t) = exp(-rate t^β')`.
    pub rate: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub schema_version: u32,
    pub t_grid: Vec<f64>,
    /// Fraction of samples with `T ≥ t`. Censored samples count as
    /// survivors up to their horizon and not beyond, so past a horizon the
    /// value is a lower bound.
    pub survival: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub samples: usize,
    pub censored: usize,
    pub fit: Option<TailFit>,
    /// Why the fit was skipped, when it was.
    pub fit_skipped: Option<String>,
}

/// One waiting time for the tail curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    pub value: Option<f64>,
    pub horizon: f64,
}

impl From<&WaitingTimeRecord> for TailSample {
    fn from(r: &WaitingTimeRecord) -> Self {
        TailSample {
            value: if r.censored { None } else { r.waiting_time },
            horizon: r.horizon,
        }
    }
}

pub fn tail_curve(records: &[WaitingTimeRecord], t_grid: &[f64]) -> Result<TailCurve, ExperimentError> {
    let samples: Vec<TailSample> = records.iter().map(TailSample::from).collect();
    tail_curve_from_samples(&samples, t_grid)
}

/// Survival curve with Wilson bands, and a weighted least-squares fit of
/// `log(-log S)` against `log t` at the uncensored values. The `i`-th
/// smallest of `n` samples sits at `p_i = (i - 1/2)/n` with weight
/// `(1 - p) ln²(1 - p) / p`, the inverse of the asymptotic variance of a
/// log order statistic.
pub fn tail_curve_from_samples(samples: &[TailSample], t_grid: &[f64]) -> Result<TailCurve, ExperimentError> {
    if samples.is_empty() {
        return Err(ExperimentError::TooFewSamples { needed: 1, got: 0 });
    }
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(ExperimentError::Config("t grid must be nondecreasing".into()));
    }
    let n = samples.len();
    let survives = |s: &TailSample, t: f64| match s.value {
        Some(v) => v >= t,
        None => t <= s.horizon,
    };
    let mut survival = Vec::with_capacity(t_grid.len());
    let mut lower = Vec::with_capacity(t_grid.len());
    let mut upper = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let k = samples.iter().filter(|s| survives(s, t)).count();
        survival.push(k as f64 / n as f64);
        let (lo, hi) = wilson_interval(k, n);
        lower.push(lo);
        upper.push(hi);
    }
    let censored = samples.iter().filter(|s| s.value.is_none()).count();

    let mut values: Vec<f64> = samples.iter().filter_map(|s| s.value).collect();
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    let distinct_positive = distinct.iter().filter(|v| **v > 0.0).count();
    let (fit, fit_skipped) = if distinct_positive < MIN_FIT_DISTINCT {
        (
            None,
            Some(format!(
                "{distinct_positive} distinct positive uncensored values, need {MIN_FIT_DISTINCT}"
            )),
        )
    } else {
        let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
        for (i, v) in values.iter().enumerate() {
            if *v <= 0.0 {
                continue;
            }
            let p = (i as f64 + 0.5) / n as f64;
            let s = 1.0 - p;
            xs.push(v.ln());
            ys.push((-s.ln()).ln());
            ws.push(s * s.ln().powi(2) / p);
        }
        let m: f64 = ws.iter().sum();
        let mx = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / m;
        let my = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / m;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for ((x, y), w) in xs.iter().zip(&ys).zip(&ws) {
            sxy += w * (x - mx) * (y - my);
            sxx += w * (x - mx) * (x - mx);
        }
        let exponent = sxy / sxx;
        let intercept = my - exponent * mx;
        (
            Some(TailFit {
                exponent,
                length_scale: (-intercept / exponent).exp(),
                rate: intercept.exp(),
                points: xs.len(),
            }),
            None,
        )
    };
    Ok(TailCurve {
        schema_version: super::REPORT_SCHEMA_VERSION,
        t_grid: t_grid.to_vec(),
        survival,
        lower,
        upper,
        samples: n,
        censored,
        fit,
        fit_skipped,
    })
}
