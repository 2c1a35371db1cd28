use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// The minimum singular value is (numerically) not simple at `z`.
    #[error("degenerate point at {z}: relative singular value gap {rel_gap:e}")]
    DegeneratePoint { z: Complex64, rel_gap: f64 },

    /// `z` sits on an eigenvalue to working precision; first-order data is undefined there.
    #[error("point {z} is an eigenvalue to working precision (sigma_min = {sigma:e})")]
    AtEigenvalue { z: Complex64, sigma: f64 },

    /// Requested exclusion radius would be non-positive.
    #[error("point {z} lies inside the {epsilon:e}-pseudospectrum (sigma_min = {sigma:e})")]
    InsidePseudospectrum { z: Complex64, sigma: f64, epsilon: f64 },

    #[error("matrix is not normal: commutator norm {commutator:e} exceeds {limit:e}")]
    NotNormal { commutator: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
