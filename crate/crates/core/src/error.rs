use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("mode {mode} is under-resolved: k*pi*h/length = {ratio:.4} exceeds pi/2")]
    Resolution { mode: usize, ratio: f64 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("integration produced non-finite values at time node {time_index}")]
    IntegrationFailure { time_index: usize },

    #[error("fixed-point iteration is not contracting (step norm {step:.3e} vs first step {first:.3e})")]
    NonContraction { step: f64, first: f64 },

    #[error("fixed-point tolerance not met after {iterations} iterations (last step {last_step:.3e})")]
    ToleranceNotMet {
        iterations: usize,
        last_step: f64,
        best_tail: Vec<f64>,
    },

    #[error("tail system I - J is near-singular (condition estimate {condition:.3e})")]
    NearSingular { condition: f64 },

    #[error("no split k <= {k_max} reaches mu <= {mu_target} (best mu {best_mu:.4e}); increase N")]
    Capacity {
        k_max: usize,
        mu_target: f64,
        best_mu: f64,
    },

    #[error("observation window does not determine the head: gram min eigenvalue {min_eig:.3e} <= {threshold:.3e}")]
    IllPosedObservation { min_eig: f64, threshold: f64 },

    #[error("tail contraction lost (mu = {mu:.4e} > {mu_target}); increase K")]
    ContractionLost { mu: f64, mu_target: f64 },

    #[error("contraction budget exhausted during descent ({rejections} consecutive rejections); increase K")]
    ContractionBudget { rejections: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
