use thiserror::Error;

/// Errors raised by the estimator library.
#[derive(Debug, Error)]
pub enum PchaError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of domain: {0}")]
    InvalidValue(String),

    #[error(
        "basis has {n_basis} columns which exceeds the oracle cap of {cap}; \
         use the kernel operations instead of materializing the design"
    )]
    OracleCapExceeded { n_basis: u128, cap: usize },

    #[error("kernel matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("regularization value must be nonnegative, got {0}")]
    NegativeRegularization(f64),

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error(
        "positivity violation: propensity {value} at row {row} outside [{bound}, 1 − {bound}]"
    )]
    Positivity { row: usize, value: f64, bound: f64 },

    #[error("cross-validation failed: {0}")]
    CrossValidation(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("input error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PchaError {
    /// Whether the error stems from bad user input or configuration rather
    /// than a failure while computing.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PchaError::EmptyInput(_)
                | PchaError::DimensionMismatch(_)
                | PchaError::InvalidValue(_)
                | PchaError::NegativeRegularization(_)
                | PchaError::Positivity { .. }
                | PchaError::Parse { .. }
                | PchaError::Config(_)
                | PchaError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, PchaError>;
