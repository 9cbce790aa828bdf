use thiserror::Error;

/// Coarse failure classes. The CLI maps them onto exit codes and the C ABI
/// onto status values, so the numbering is part of the public contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCategory {
    /// Malformed input, dimension mismatch, invalid parameters.
    Parse,
    /// A numerical procedure failed (singular solve, no convergence).
    Numerical,
    /// A precondition of the requested quantity does not hold.
    Precondition,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Parse => 2,
            ErrorCategory::Numerical => 3,
            ErrorCategory::Precondition => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Parse => "parse",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Precondition => "precondition",
        }
    }
}

#[derive(Debug, Error)]
pub enum QbdError {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    IterationLimit {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular system in {0}")]
    Singular(String),

    #[error("numerical rank error in {context}: expected kernel dimension {expected}, found {found}")]
    NumericalRank {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("asymptotic quantities are undefined: {0}")]
    AsymptoticsUndefined(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tail series did not converge after {terms} terms (last term norm {last_term:e})")]
    TailConvergence { terms: usize, last_term: f64 },

    #[error("level {level} out of range 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("ill-conditioned result in {context}: residual {residual:e}")]
    Conditioning { context: String, residual: f64 },

    #[error("problem of order {order} exceeds the oracle limit {limit}")]
    TooLarge { order: usize, limit: usize },

    #[error("ladder failed at capacity {rung}: {source}")]
    Rung {
        rung: usize,
        #[source]
        source: Box<QbdError>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QbdError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            QbdError::Structure(_)
            | QbdError::Model(_)
            | QbdError::Parameter(_)
            | QbdError::LevelOutOfRange { .. }
            | QbdError::Parse(_)
            | QbdError::Io(_) => ErrorCategory::Parse,
            QbdError::IterationLimit { .. }
            | QbdError::Singular(_)
            | QbdError::NumericalRank { .. }
            | QbdError::TailConvergence { .. }
            | QbdError::Conditioning { .. } => ErrorCategory::Numerical,
            QbdError::AsymptoticsUndefined(_) | QbdError::Precondition(_) | QbdError::TooLarge { .. } => {
                ErrorCategory::Precondition
            }
            QbdError::Rung { source, .. } => source.category(),
        }
    }
}

impl From<serde_json::Error> for QbdError {
    fn from(e: serde_json::Error) -> Self {
        QbdError::Parse(format!("line {} column {}: {}", e.line(), e.column(), e))
    }
}

pub type Result<T> = std::result::Result<T, QbdError>;
