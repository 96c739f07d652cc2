use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The configuration document does not match the key schema.
    #[error("config schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value violates a validation rule (masses, covariances, scalars).
    #[error("invalid config: {0}")]
    Invalid(String),

    /// Controllability / observability failed for a type.
    #[error("type {type_index}: {detail}")]
    Structural { type_index: usize, detail: String },

    /// The contraction condition on the mean-field operator fails.
    #[error(
        "contraction condition violated (Xi={xi:.3} >= 1): the mean-field fixed point is not \
         guaranteed to exist; rerun with --force to iterate anyway"
    )]
    ContractionViolated { xi: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{what} diverged after {iterations} iterations (residual {residual:e})")]
    Diverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("numerically singular matrix in {0}")]
    Singular(&'static str),

    #[error("incomparable seeds: {0} vs {1} (probe arms must share noise streams)")]
    IncomparableSeeds(u64, u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Dimension(_) | Error::Invalid(_) | Error::Io(_) => 2,
            Error::Structural { .. } | Error::ContractionViolated { .. } => 3,
            Error::NotConverged { .. } | Error::Diverged { .. } | Error::Singular(_) => 4,
            Error::IncomparableSeeds(..) => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
