//! The exclusion / augmentation experiment catalog, trial execution, Welch
//! comparisons and result tables.

mod catalog;
mod report;
mod runner;
mod stats;

pub use catalog::{
    a_series, all_spec, catalog, counterparts, e_series, lookup, valid_ids, ExperimentSpec,
    RingCoverage, RotationCoverage, Series, DEFAULT_TRIALS,
};
pub use report::{
    e_vs_a, emit_table, model_comparisons, read_results, render_tables, sort_results,
    summary_rows, write_results, write_summary, SummaryRow, RESULTS_NAME, SUMMARY_NAME,
    TABLES_NAME,
};
pub use runner::{
    build_split, policy_for, run_experiment, test_set_hash, RunSettings, SplitView, TrialResult,
};
pub use stats::{mean, summarize, variance, welch_t_test, AccuracyStats, ComparisonReport, WelchTest};

use thiserror::Error;

use crate::network::NetworkError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment '{0}'; valid ids: E1-E9, A1-A16, ALL")]
    UnknownSpec(String),
    #[error("experiment {0} violates the catalog invariants")]
    InvalidSpec(String),
    #[error("experiment {0} selects no training samples")]
    EmptyTrainSet(String),
    #[error("dataset has no test split")]
    EmptyTestSet,
    #[error("need at least 2 values per sample, got {0}")]
    SampleSize(usize),
    #[error("non-finite accuracy")]
    NonFinite,
    #[error("results file: {0}")]
    Results(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;
