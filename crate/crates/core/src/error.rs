use thiserror::Error;

/// Errors raised anywhere in the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("tabulated function queried at r = {r} outside its knot range [{lo}, {hi}]")]
    Extrapolation { r: f64, lo: f64, hi: f64 },

    #[error("time step k = {k:e} violates the {method} stability limit {limit:e}")]
    Stability { method: &'static str, k: f64, limit: f64 },

    #[error("front collapse at step {step}: squared front {g:e} is not positive")]
    FrontCollapse { step: usize, g: f64 },

    #[error("invariant violation at step {step}: {message}")]
    InvariantViolation { step: usize, message: String },

    #[error("non-finite value at step {step} in {what}")]
    NonFinite { step: usize, what: &'static str },

    #[error("front advance {delta} exceeds 2 + eps at step {step}; time step too large")]
    StepSizeViolation { step: usize, delta: f64 },

    #[error("last interior index {index} is too close to the origin for the front stencil")]
    DomainExhausted { index: usize },

    #[error("fractional distance p = {p} is not above eps = {eps}; rebase must run first")]
    Contract { p: f64, eps: f64 },

    #[error("no sign change of the radial profile before r = {r_cap}")]
    NoRootFound { r_cap: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("incompatible ensemble: {0}")]
    IncompatibleEnsemble(String),

    #[error("realization {index} failed: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Io {
        stage: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Output(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
