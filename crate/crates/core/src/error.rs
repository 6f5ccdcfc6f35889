use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular point: {0}")]
    SingularPoint(String),

    #[error("filter weight vanishes on the support of the spectrum")]
    EmptyFilter,

    #[error("spectrum is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("quadrature did not converge after {evals} evaluations (estimate {estimate:e}, previous {previous:e}, error {error:e})")]
    NonConvergence { estimate: f64, previous: f64, error: f64, evals: usize },

    #[error("too few samples: {got} < {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("grid does not resolve the integrand: {0}")]
    Resolution(String),

    #[error("grid is not normalized (total mass {0})")]
    Unnormalized(f64),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
