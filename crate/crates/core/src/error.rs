use std::path::PathBuf;

use crate::estimator::SolverTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid data-generating process: {0}")]
    InvalidDgp(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),

    #[error(
        "insufficient tail data: {found} observations above the threshold, need at least {needed}"
    )]
    InsufficientTailData { needed: usize, found: usize },

    #[error("exp(x'theta) overflows at row {row} (index {index:.3} exceeds 700)")]
    Overflow { row: usize, index: f64 },

    #[error(
        "rank-deficient tail Gram matrix (ascending eigenvalues {eigenvalues:?}, floor {floor:e})"
    )]
    RankDeficient { eigenvalues: Vec<f64>, floor: f64 },

    #[error(
        "Newton solver did not converge after {} iterations (gradient norm {:e}, objective {})",
        .0.iterations, .0.gradient_norm, .0.objective
    )]
    NonConvergence(Box<SolverTrace>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error{}: {message}", .row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Ingestion { row: Option<usize>, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDgp(_) => "invalid-dgp",
            Error::Domain(_) => "domain",
            Error::InvalidThreshold(_) => "invalid-threshold",
            Error::InsufficientTailData { .. } => "insufficient-tail-data",
            Error::Overflow { .. } => "overflow",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::NonConvergence(_) => "non-convergence",
            Error::Config(_) => "config",
            Error::Ingestion { .. } => "ingestion",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Internal(_) => "internal",
        }
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Internal(_))
    }
}
