use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("poisson noise requires nonnegative intensities (found {0})")]
    NegativeIntensity(f64),

    #[error("mask must be binary (found value {0})")]
    NonBinaryMask(f64),

    #[error("kernel is empty or sums to zero")]
    EmptyKernel,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("{what} did not converge within {iters} iterations (last residual {residual:e})")]
    ConvergenceFailure {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("{0} is not differentiable")]
    NonSmooth(&'static str),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("iteration diverged at step {0}")]
    Diverged(usize),

    #[error("step sizes violate sigma*tau*|A|^2 <= 1 (product {0:.4})")]
    StepSizeViolation(f64),

    #[error("inner solve failed: {0}")]
    InnerSolveFailure(String),

    #[error("denoiser is singular (lower spectral bound {0:e})")]
    SingularDenoiser(f64),

    #[error("spectral filter undefined at eigenvalue {lambda} for tau {tau}")]
    FilterDomainViolation { lambda: f64, tau: f64 },

    #[error("dense oracle unavailable for {0} unknowns")]
    OracleUnavailable(usize),

    #[error("fixed-point map is not contractive (ratio {ratio:.4} for {steps} steps)")]
    NotContractive { ratio: f64, steps: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
