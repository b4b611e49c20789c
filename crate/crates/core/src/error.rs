use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate degree: leading coefficient vanishes")]
    DegenerateDegree,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no convergence: {message} (residual trace {trace:?})")]
    NoConvergence { message: String, trace: Vec<f64> },
    #[error("step underflow at parameter {0}")]
    StepUnderflow(f64),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::DegenerateDegree)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
