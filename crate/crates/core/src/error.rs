use thiserror::Error;

/// Errors raised by model evaluation, control synthesis, filtering and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("state contains non-finite entries")]
    NonFinite,

    #[error("mass matrix is not positive definite at q = {q:?}")]
    SingularMass { q: Vec<f64> },

    #[error("input map is rank deficient; left pseudo-inverse does not exist")]
    RankDeficient,

    #[error("added-energy gradient is not in the range of the input matrix (residual {residual:e})")]
    MatchingViolation { residual: f64 },

    #[error("barrier constraint is singular: |L_g h| = {lg_norm:e} while psi = {psi:e} < 0")]
    ConstraintSingular { lg_norm: f64, psi: f64 },

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
