use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("state is not faithful (minimum eigenvalue {0:e})")]
    NotFaithful(f64),

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("components do not form an isometry tuple (max deviation {0:e})")]
    NotIsometry(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("marginal mismatch: max deviation {0:e}")]
    MarginalMismatch(f64),

    #[error("Gram sums differ: max deviation {0:e}")]
    GramMismatch(f64),

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gave up after {0} attempts: {1}")]
    RetryExhausted(usize, String),

    #[error("sample {index} at rank {r}: {source}")]
    AtSample {
        r: usize,
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidState(_) => "invalid_state",
            Error::NotFaithful(_) => "not_faithful",
            Error::NotUnitary(_) => "not_unitary",
            Error::NotIsometry(_) => "not_isometry",
            Error::Precondition(_) => "precondition",
            Error::MarginalMismatch(_) => "marginal_mismatch",
            Error::GramMismatch(_) => "gram_mismatch",
            Error::ResourceGuard(_) => "resource_guard",
            Error::Numerical(_) => "numerical",
            Error::RetryExhausted(..) => "retry_exhausted",
            Error::AtSample { source, .. } => source.kind(),
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True if this error (or the error it wraps) is a resource guard trip.
    pub fn is_resource_guard(&self) -> bool {
        match self {
            Error::ResourceGuard(_) => true,
            Error::AtSample { source, .. } => source.is_resource_guard(),
            _ => false,
        }
    }
}
