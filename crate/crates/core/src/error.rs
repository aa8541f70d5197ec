use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator is not hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("vector is not a unit Bloch vector (|r| = {0})")]
    NonUnitVector(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown protocol kind `{0}`")]
    UnknownProtocol(String),

    #[error("unknown channel specification `{0}`")]
    UnknownChannel(String),

    #[error("channel is not trace preserving (max deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("decomposition of unity violated (max residual {0:e})")]
    UnityViolated(f64),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("cell probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),

    #[error("every measurement row has vanishing probability for this state")]
    DegenerateInformation,

    #[error("tomographically incomplete: {count} eigenvalues of the information matrix below {threshold:e}")]
    Incomplete { count: usize, threshold: f64 },

    #[error("no counts recorded")]
    EmptyCounts,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Json(_)
                | Error::Io(_)
                | Error::UnknownProtocol(_)
                | Error::UnknownChannel(_)
                | Error::InvalidParameter { .. }
                | Error::NonUnitVector(_)
                | Error::NotNormalized(_)
                | Error::ResourceLimit(_)
        )
    }
}
