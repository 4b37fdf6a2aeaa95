use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by model construction, the numerical kernels and the
/// reduction drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shift {0} is (numerically) a pole: sE - A is singular")]
    SingularShift(Complex64),

    #[error("generalized eigenvalue computation failed: {0}")]
    PencilFailure(String),

    #[error("system is not asymptotically stable (spectral abscissa {0:e})")]
    UnstableSystem(f64),

    #[error("Lyapunov solve missed its residual target (relative residual {0:e})")]
    IllConditioned(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid quadrature range: {0}")]
    InvalidRange(String),

    #[error("no stored sample within tolerance of s = {0}")]
    MissingSample(Complex64),

    #[error("shift {shift} collides with quadrature node {node}")]
    DegenerateShift { shift: Complex64, node: Complex64 },

    #[error("data matrix is rank deficient (condition estimate {0:e})")]
    RankDeficientData(f64),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid shifts: {0}")]
    InvalidShifts(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid benchmark spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Failures of the numerics on valid input, as opposed to malformed
    /// input, configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularShift(_)
                | Error::PencilFailure(_)
                | Error::UnstableSystem(_)
                | Error::IllConditioned(_)
                | Error::NotPsd(_)
                | Error::MissingSample(_)
                | Error::DegenerateShift { .. }
                | Error::RankDeficientData(_)
        )
    }
}
