use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("sharpe ratio undefined: portfolio volatility is zero")]
    ZeroVolatility,

    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "evaluation budget exhausted during initialization: {filled} of {required} niches filled ({fraction:.4} of M)"
    )]
    InitBudgetExhausted {
        filled: usize,
        required: usize,
        fraction: f64,
    },

    #[error(
        "no near-optimal portfolio in archive; loosen the near-optimality constant c or extend the evaluation budget"
    )]
    NoNearOptimal,

    #[error("unknown {kind} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("checksum mismatch for {what}: expected {expected}, found {found}")]
    ChecksumMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::Numerical(_) | Error::ZeroVolatility
        )
    }
}
