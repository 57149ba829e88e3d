use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error(
        "ill-conditioned center set: Cholesky failed at maximum jitter; \
         minimum separation {min_separation:.6e}"
    )]
    IllConditioned { min_separation: f64 },

    #[error("matrix is not Hurwitz: max eigenvalue real part {max_real_part:.6e}")]
    NotHurwitz { max_real_part: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(&'static str),

    #[error("{quantity} residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge {
        quantity: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("point lies off the manifold: distance {distance:.3e} exceeds tolerance {tolerance:.3e}")]
    OffManifold { distance: f64, tolerance: f64 },

    #[error("state diverged (non-finite) at t = {t}")]
    Diverged { t: f64 },

    #[error("insufficient data for {context}: need {needed}, have {have}")]
    InsufficientData {
        context: &'static str,
        needed: usize,
        have: usize,
    },

    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
