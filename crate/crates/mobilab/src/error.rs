//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by panel construction, regression and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a structural precondition (bad config, invalid window, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// CSV ingestion failed hard (missing column, duplicate key, I/O).
    #[error("csv: {0}")]
    Csv(String),

    /// Row-level parse failures collected during lenient ingestion.
    #[error("{} malformed row(s); first: line {}: {}", .0.len(), .0[0].line, .0[0].message)]
    MalformedRows(Vec<RowError>),

    /// The design matrix is exactly collinear after absorption.
    /// Carries a minimal set of column names that are linearly dependent
    /// on the preceding ones.
    #[error("collinear design: dependent columns {0:?}")]
    Collinear(Vec<String>),

    /// Fewer observations than parameters after fixed-effect absorption.
    #[error("underdetermined fit: {n_obs} obs <= {n_params} params")]
    Underdetermined { n_obs: usize, n_params: usize },

    /// Estimation produced an empty sample.
    #[error("empty sample: {0}")]
    EmptySample(String),

    /// Logs were requested on nonpositive level incomes (bottom-code first).
    #[error("nonpositive income where a log is required: person {person_id}, age {age}")]
    NonpositiveIncome { person_id: String, age: u16 },

    /// Coordinate descent hit `max_iter` before converging. Carries the last
    /// coefficient iterate and the objective trace for diagnosis.
    #[error("coordinate descent did not converge after {iters} iterations (last objective {last_objective:.6e})")]
    NoConvergence {
        iters: usize,
        last_objective: f64,
        coefficients: Vec<f64>,
        objective_trace: Vec<f64>,
    },

    /// Parametric variance profile went nonpositive at an age that is needed.
    #[error("fitted variance profile nonpositive at age {age} (group {group}); use the nonparametric profile")]
    NonpositiveVariance { age: u16, group: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A single malformed CSV row.
#[derive(Debug, Clone)]
pub struct RowError {
    /// 1-based line number in the source file (header = line 1).
    pub line: u64,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, Error>;
