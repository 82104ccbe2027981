//! Operating-limit violations, dataset validation by independent
//! recomputation, entropy-based diversity and summary statistics.

mod entropy;
mod stats;
mod validate;
mod violations;

pub use entropy::{
    compute_entropy, feature_entropy, feature_values, histogram_entropy, Domain, Feature, FeatureEntropy,
    DEFAULT_BINS,
};
pub use stats::{compute_stats, render_text, stats_report, Histogram, Spread, StatsReport};
pub use validate::{
    balance_residuals, rebuild_grid, stored_state, validate, validate_dataset, CheckFailure, ValidationReport,
    BALANCE_FACTOR, FLOW_TOLERANCE,
};
pub use violations::{detect_violations, ViolationReport, DEFAULT_VIOLATION_TOL};

use thiserror::Error;

use crate::pipeline::DatasetError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("dataset has no converged samples")]
    NoConvergedSamples,
    #[error("I/O failure: {0}")]
    Io(String),
}
