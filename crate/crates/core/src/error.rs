use thiserror::Error;

/// Errors raised by the control and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("step size {dt} s outside (0, {max}] s")]
    StepSize { dt: f64, max: f64 },

    #[error("no leg in contact; the linear model has no inputs")]
    NoContacts,

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("hessian is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("constraint row {row} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { row: usize, lower: f64, upper: f64 },

    #[error("kkt matrix factorization failed")]
    Factorization,

    #[error("leg jacobian is singular (det = {det:e})")]
    Singular { det: f64 },

    #[error("swing phase {0} outside [0, 1]")]
    PhaseOutOfRange(f64),

    #[error("simulation diverged at t = {t:.3} s: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
