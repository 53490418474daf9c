use thiserror::Error;

/// Errors raised by the Φ-entropy toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Φ: {0}")]
    InvalidPhi(String),

    #[error("{what} = {value} lies outside {interval}")]
    Domain {
        what: String,
        value: f64,
        interval: String,
    },

    #[error("plan {plan} cannot integrate {measure}")]
    PlanMismatch { plan: String, measure: String },

    #[error("non-finite value {value} while evaluating {context}")]
    NonFinite { context: String, value: f64 },

    #[error("hypothesis {hypothesis} not certified for {phi} (margin {margin:e})")]
    HypothesisRefused {
        hypothesis: String,
        phi: String,
        margin: f64,
    },

    #[error("rejection sampler exceeded {cap} proposals; the tilt is ill-conditioned")]
    IllConditionedTilt { cap: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: String,
        iterations: usize,
        residual: f64,
    },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn finite(context: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
            value,
        })
    }
}
