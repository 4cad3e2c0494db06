use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not positive semi-definite: smallest eigenvalue {min_eigenvalue:e} below tolerance {threshold:e}")]
    NotPsd { min_eigenvalue: f64, threshold: f64 },

    #[error("unsupported operator norm: {0}")]
    UnsupportedNorm(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample size too small: need n >= {required}, got {got}")]
    SampleSize { required: usize, got: usize },

    #[error("column {0} has zero sample variance")]
    DegenerateColumn(usize),

    #[error("alpha {alpha} gives order-statistic index {k} outside 1..={b}; enlarge B")]
    AlphaGrid { alpha: f64, b: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Whether the error stems from user configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::AlphaGrid { .. } | Error::Domain(_) | Error::Dimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
