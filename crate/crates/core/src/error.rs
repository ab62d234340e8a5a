use thiserror::Error;

pub type Result<T, E = MagicError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MagicError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Symmetric factorization failed even with the largest diagonal jitter.
    #[error("matrix is not positive definite (last jitter attempted: {jitter:e})")]
    Singular { jitter: f64 },

    #[error("t = {t} lies outside the knot span [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("quadrature needs at least 2 grid points, got {0}")]
    Quadrature(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: String,
        line: u64,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint parse error at line {line}, column {column}: {message}")]
    CheckpointParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("report parse error: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MagicError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            MagicError::Config(_) | MagicError::InvalidParameter(_) => 1,
            MagicError::Singular { .. }
            | MagicError::Optimizer(_)
            | MagicError::Fit(_)
            | MagicError::UndefinedMetric(_) => 3,
            _ => 2,
        }
    }
}
