use std::fmt;
use std::path::PathBuf;

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", join_fields(.0))]
    Validation(Vec<FieldError>),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("insufficient separation: {0}")]
    InsufficientSeparation(String),

    #[error("fit did not converge after {iterations} iterations (best deviance {best_deviance})")]
    NoConvergence { iterations: usize, best_deviance: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("flux too high for P0 estimator")]
    FluxTooHigh,

    #[error("no qualifying bins for goodness of fit")]
    NoQualifyingBins,

    #[error("empty input")]
    EmptyInput,

    #[error("{what} {value} outside anchor span [{lo}, {hi}]")]
    OutOfSpan {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 validation/usage, 3 fit failure, 4 I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::ConfigParse { .. }
            | Error::Usage(_)
            | Error::OutOfSpan { .. }
            | Error::EmptyInput => 2,
            Error::InsufficientSeparation(_)
            | Error::NoConvergence { .. }
            | Error::Fit(_)
            | Error::FluxTooHigh
            | Error::NoQualifyingBins => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
