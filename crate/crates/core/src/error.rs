use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error in {file}: {message}")]
    Format { file: String, message: String },

    #[error("unsupported NIfTI datatype code {code} (supported: 4 = int16, 16 = float32)")]
    UnsupportedDatatype { code: i16 },

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("design matrix: {0}")]
    Design(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cohort spec: {0}")]
    Spec(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad arguments, missing config fields, out-of-range parameters.
    Usage,
    /// Unreadable, malformed or inconsistent data.
    Data,
    /// Numerical failure (non-convergence, degenerate inputs).
    Numerical,
    /// Anything else.
    Internal,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Param(_) | Error::Spec(_) | Error::Config(_) => ErrorCategory::Usage,
            Error::Format { .. }
            | Error::UnsupportedDatatype { .. }
            | Error::EmptyMask(_)
            | Error::Shape(_)
            | Error::Index(_)
            | Error::Design(_)
            | Error::Io { .. } => ErrorCategory::Data,
            Error::Degenerate(_)
            | Error::Convergence { .. }
            | Error::Rank(_)
            | Error::Domain(_) => ErrorCategory::Numerical,
            Error::Stage { source, .. } => source.category(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
