use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),

    #[error("label {label} out of range for a {k}-component mixture")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("data point shape does not match scenario {scenario}: {detail}")]
    ShapeMismatch { scenario: String, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unsupported scenario: {0}")]
    Unsupported(String),

    #[error("invalid alpha: {0}")]
    InvalidAlpha(String),

    #[error("parameter on the boundary of its domain: {0}")]
    DegenerateParameter(String),

    #[error("matrix block `{block}` is not positive definite (condition number {condition:.3e})")]
    SingularBlock { block: String, condition: f64 },

    #[error("quadrature grid too coarse: entry ({row}, {col}) moved by {shift:.3e} between resolutions")]
    GridTooCoarse { row: usize, col: usize, shift: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("candidate `{label}`: {source}")]
    Candidate {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// The underlying error with candidate context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Candidate { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularBlock { .. } | Error::GridTooCoarse { .. } | Error::DegenerateParameter(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
