use thiserror::Error;

/// Errors raised by the certification toolkit.
///
/// Failing to certify a game is not an error: see
/// [`crate::region::CertifyOutcome`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in block {block}: expected {expected}, found {found}")]
    BlockDimension {
        block: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix `{what}` is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { what: String, asymmetry: f64 },

    #[error("matrix `{what}` is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { what: String, min_eig: f64 },

    #[error("spectral probe did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("point lies on or too close to the simplex boundary: {0}")]
    Boundary(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("sample {sample}: {source}")]
    AtSample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_sample(self, sample: usize) -> Self {
        Error::AtSample {
            sample,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
