//! Waiting-time ensembles over seeds and sources.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{ExperimentError, REPORT_SCHEMA_VERSION};
use crate::frontier::{trace_reachable, FrontTrace, Source, WaitingTimeRecord};
use crate::stats::{r_star, EmpiricalStats};

/// Everything measured at one source.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceSample {
    pub seed: u64,
    pub source: Source,
    pub trace: FrontTrace,
    pub stats: Option<EmpiricalStats>,
    /// One record per configured `c`.
    pub records: Vec<WaitingTimeRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub samples: Vec<SourceSample>,
}

impl EnsembleRun {
    pub fn records(&self) -> Vec<WaitingTimeRecord> {
        self.samples.iter().flat_map(|s| s.records.iter().cloned()).collect()
    }

    pub fn traces(&self) -> impl Iterator<Item = &FrontTrace> {
        self.samples.iter().map(|s| &s.trace)
    }
}

/// Measures every source of one seed's field.
pub fn measure_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<SourceSample>, ExperimentError> {
    let waiting = config.waiting()?;
    let field = config.field.build(seed)?;
    let settings = config.front.settings();
    let mut out = Vec::new();
    for source in config.sources_for_seed(seed, waiting.horizon)? {
        let trace = trace_reachable(
            &field,
            &source,
            waiting.horizon,
            waiting.n_samples,
            &settings,
            &waiting.box_sides,
        )?;
        let stats = match &config.stats {
            Some(s) => Some(r_star(&field, source.t0, &source.x0, &s.spec())?),
            None => None,
        };
        let mut records = Vec::with_capacity(waiting.c.len());
        for &c in &waiting.c {
            let mut rec = WaitingTimeRecord::from_trace(&trace, seed, c, stats.as_ref().map(|s| s.r_star))?;
            rec.r_star_censored = stats.as_ref().is_some_and(|s| s.censored);
            records.push(rec);
        }
        out.push(SourceSample {
            seed,
            source,
            trace,
            stats,
            records,
        });
    }
    Ok(out)
}

/// Runs all seeds in parallel and merges them in seed order.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleRun, ExperimentError> {
    config.validate()?;
    config.waiting()?;
    let seeds: Vec<u64> = config.seeds.seeds().collect();
    let per_seed = seeds
        .par_iter()
        .map(|&seed| measure_seed(config, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleRun {
        samples: per_seed.into_iter().flatten().collect(),
    })
}

pub fn run_waiting_time_ensemble(config: &ExperimentConfig) -> Result<Vec<WaitingTimeRecord>, ExperimentError> {
    Ok(run_ensemble(config)?.records())
}

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut cols = vec!["seed".to_string(), "t0".to_string()];
    cols.extend((0..dim).map(|i| format!("x0_{i}")));
    for c in ["c", "T", "censored", "r_star", "horizon"] {
        cols.push(c.to_string());
    }
    cols
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one row per record: `seed,t0,x0_0..,c,T,censored,r_star,horizon`.
/// `T` and `r_star` are empty when unavailable.
pub fn write_records_csv<W: Write>(w: W, records: &[WaitingTimeRecord]) -> Result<(), ExperimentError> {
    let dim = records.first().map(|r| r.source.x0.len()).unwrap_or(2);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(dim))?;
    for r in records {
        let mut row = vec![r.seed.to_string(), r.source.t0.to_string()];
        row.extend(r.source.x0.iter().map(|x| x.to_string()));
        row.push(r.c.to_string());
        row.push(opt(r.waiting_time));
        row.push(r.censored.to_string());
        row.push(opt(r.r_star));
        row.push(r.horizon.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads records written by [`write_records_csv`]. Diagnostics curves are
/// not part of the CSV and come back empty.
pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<WaitingTimeRecord>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    let dim = header.len().checked_sub(7).filter(|d| *d >= 1).ok_or_else(|| {
        ExperimentError::Config(format!("unexpected waiting-time CSV header {header:?}"))
    })?;
    if header.iter().collect::<Vec<_>>() != csv_header(dim) {
        return Err(ExperimentError::Config(format!(
            "unexpected waiting-time CSV header {header:?}"
        )));
    }
    let bad = |what: &str, v: &str| ExperimentError::Config(format!("bad {what} {v:?} in waiting-time CSV"));
    let num = |v: &str, what: &str| v.parse::<f64>().map_err(|_| bad(what, v));
    let maybe = |v: &str, what: &str| {
        if v.is_empty() {
            Ok(None)
        } else {
            num(v, what).map(Some)
        }
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let seed = row[0].parse().map_err(|_| bad("seed", &row[0]))?;
        let t0 = num(&row[1], "t0")?;
        let x0 = (0..dim).map(|i| num(&row[2 + i], "x0")).collect::<Result<_, _>>()?;
        let k = 2 + dim;
        let censored = row[k + 2].parse().map_err(|_| bad("censored", &row[k + 2]))?;
        out.push(WaitingTimeRecord {
            seed,
            source: Source { t0, x0 },
            c: num(&row[k], "c")?,
            waiting_time: maybe(&row[k + 1], "T")?,
            censored,
            r_star: maybe(&row[k + 3], "r_star")?,
            r_star_censored: false,
            horizon: num(&row[k + 4], "horizon")?,
            times: Vec::new(),
            volume: Vec::new(),
            inscribed_radius: Vec::new(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringSummary {
    pub c: f64,
    pub records: usize,
    pub censored: usize,
    pub censored_fraction: f64,
}

/// Run-level summary written next to the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub schema_version: u32,
    pub sources: usize,
    pub by_c: Vec<CensoringSummary>,
    /// Per source, the largest `c` whose waiting time is uncensored.
    pub supremal_c: Vec<f64>,
    pub r_star_censored: usize,
}

impl EnsembleSummary {
    pub fn from_run(run: &EnsembleRun, c_values: &[f64]) -> Self {
        let by_c = c_values
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let records = run.samples.len();
                let censored = run.samples.iter().filter(|s| s.records[i].censored).count();
                CensoringSummary {
                    c,
                    records,
                    censored,
                    censored_fraction: if records > 0 { censored as f64 / records as f64 } else { 0.0 },
                }
            })
            .collect();
        EnsembleSummary {
            schema_version: REPORT_SCHEMA_VERSION,
            sources: run.samples.len(),
            by_c,
            supremal_c: run.samples.iter().map(|s| s.trace.supremal_c()).collect(),
            r_star_censored: run
                .samples
                .iter()
                .filter(|s| s.stats.as_ref().is_some_and(|st| st.censored))
                .count(),
        }
    }
}
