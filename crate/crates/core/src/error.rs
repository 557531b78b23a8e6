use thiserror::Error;

use crate::solver::SolveResult;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: need 0 < lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid estimator polynomial: {0}")]
    InvalidEstimator(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "aggregate constraint matrix is singular without regularization ({0}); \
         use more grid points or enable the ridge"
    )]
    RankDeficient(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence {
        gap: f64,
        iterations: usize,
        best: Box<SolveResult>,
    },

    #[error(
        "approximation interval collapsed: n/k = {lo} >= c1 ln k = {hi}; \
         fall back to naive counting"
    )]
    IntervalCollapse { lo: f64, hi: f64 },

    #[error("sample coverage is zero (every observed symbol is a singleton)")]
    CoverageZero,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },

    #[error("invalid UTF-8 at byte offset {offset}")]
    Encoding { offset: usize },

    #[error("infeasible distribution target: {0}")]
    InfeasibleTarget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for input/validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient(_) | Error::NonConvergence { .. } | Error::CoverageZero => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
