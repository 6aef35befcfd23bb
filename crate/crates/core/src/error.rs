use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("node index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("z = {0} lies on the real axis")]
    RealAxis(Complex64),

    #[error("QVE solver did not converge at z = {z} (last residual {residual:e})")]
    NonConvergence { z: Complex64, residual: f64 },

    #[error("contour too close to the spectrum: condition estimate {condition:e} at z = {z}")]
    ContourTooClose { z: Complex64, condition: f64 },

    #[error("no well-conditioned contour found after {attempts} attempts (last radius {radius})")]
    ContourNotFound { attempts: usize, radius: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("invalid test function: {0}")]
    TestFunction(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),
}

impl Error {
    /// True for failures of the numerics (solver, contour, quadrature,
    /// eigensolver) as opposed to rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::ContourTooClose { .. }
                | Error::ContourNotFound { .. }
                | Error::Quadrature(_)
                | Error::Eigen(_)
        )
    }
}
