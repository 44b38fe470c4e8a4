use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A rate, population or tolerance outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A state or level outside the support of the law being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("exponent {exponent:.3} exceeds the overflow guard ({limit})")]
    Overflow { exponent: f64, limit: f64 },

    #[error("series did not converge within {max_terms} terms")]
    NonConvergence { max_terms: usize },

    #[error("S({n}, {k}) is outside the exact integer range")]
    StirlingOverflow { n: u32, k: u32 },

    #[error("path exceeded {limit} events")]
    Explosion { limit: u64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
