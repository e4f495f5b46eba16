//! Reproducible ensembles, their statistics and the run configuration.

pub mod analysis;
pub mod config;
pub mod ensemble;
pub mod verify;

pub use analysis::{
    average_ranks, correlate_t_rstar, correlate_t_rstar_with, pearson, phi_domination_check,
    phi_domination_for_trace, spearman, tail_curve, tail_curve_from_samples, wilson_interval, CorrelationReport,
    DominationStatus, PhiDominationReport, TailCurve, TailFit, TailSample,
};
pub use config::{
    EvolveConfig, ExperimentConfig, FieldSpec, FrontConfig, SeedRange, SourceConfig, SourcePoint, StatsConfig,
    TailConfig, VerifyConfig, WaitingConfig,
};
pub use ensemble::{
    csv_header, measure_seed, read_records_csv, run_ensemble, run_waiting_time_ensemble, write_records_csv,
    EnsembleRun, EnsembleSummary, SourceSample,
};
pub use verify::{ball_check, oracle_agreement, verify_suite, BallCheck, Check, OracleAgreement, VerifyReport};

use crate::field::FieldError;
use crate::frontier::FrontierError;
use crate::stats::StatsError;
use crate::theory::TheoryError;

/// Version tag carried by every JSON report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Frontier(#[from] FrontierError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("need at least {needed} usable samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Whether the error stems from the user's input rather than a run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_) | ExperimentError::Toml(_) | ExperimentError::TooFewSamples { .. }
        )
    }
}
