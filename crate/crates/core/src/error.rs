use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("invalid input for {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("truncation order K={k} is smaller than the Fourier bandwidth {bandwidth}")]
    TruncationTooSmall { k: usize, bandwidth: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigensolver(String),

    #[error("quasienergy selection failed: {0}")]
    Selection(String),

    #[error("initial-state system is near singular (condition number {condition:e})")]
    NearSingular { condition: f64 },

    #[error("truncation did not converge to tol={tol:e} by K={k_max}")]
    NoConvergence { tol: f64, k_max: usize },

    #[error("time grid too coarse: dt={dt:e} us exceeds limit {limit:e} us")]
    GridTooCoarse { dt: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-uniform time grid: {0}")]
    NonUniformGrid(String),

    #[error("model {model} is not applicable: {reason}")]
    NotApplicable { model: &'static str, reason: String },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by a solver.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidInput { .. }
                | Error::TruncationTooSmall { .. }
                | Error::NotHermitian { .. }
                | Error::GridTooCoarse { .. }
                | Error::GridMismatch(_)
                | Error::NonUniformGrid(_)
                | Error::NotApplicable { .. }
                | Error::UnknownScenario(_)
                | Error::Serde(_)
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{}: {}", x.field, x.rule))
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        field,
        reason: reason.into(),
    }
}
