use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} outside supported range 5..=10")]
    DimensionOutOfRange(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error estimate {error_estimate:e}"
    )]
    QuadratureNonConvergence { estimate: f64, error_estimate: f64 },

    #[error("step size underflow at t = {t:e} after {steps} steps")]
    StepUnderflow { t: f64, steps: usize },

    #[error("unknown K field {name:?}; catalogue: {catalogue}")]
    UnknownField { name: String, catalogue: String },

    #[error("points coincide or are below resolution ({0:e})")]
    CoincidentPoints(f64),

    #[error("point is too close to the boundary (d = {0:e})")]
    NearBoundary(f64),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Validates `5 <= n <= 10`.
pub fn check_dim(n: usize) -> Result<()> {
    if (5..=10).contains(&n) {
        Ok(())
    } else {
        Err(Error::DimensionOutOfRange(n))
    }
}
