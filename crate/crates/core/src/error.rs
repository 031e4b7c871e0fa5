use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes shared by every module.
///
/// The variants map one-to-one onto the exit-code classes of the command line
/// front end: configuration problems, numeric or certification failures, and
/// violated preconditions of an experiment.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("operation `{op}` is not supported on {domain}")]
    Unsupported { op: &'static str, domain: String },

    #[error("grid too coarse: {reason}; need a candidate grid of at least {required} points")]
    Resolution { reason: String, required: usize },

    #[error("quadrature certification failed for monomial {exponent:?}: residual {residual:.3e} (reference {reference:.6e})")]
    Certification {
        exponent: Vec<u32>,
        residual: f64,
        reference: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("ambiguous numerical rank at degree {degree}: block Gram eigenvalues near the cut {spectrum:?}")]
    Degenerate { degree: usize, spectrum: Vec<f64> },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
