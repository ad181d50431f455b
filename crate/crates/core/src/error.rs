use thiserror::Error;

/// Errors raised by the simulation and diagnostics routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate point: norm {0:e} is below the renormalization threshold")]
    DegeneratePoint(f64),

    #[error("matrix too far from orthogonal: ||R^T R - I||_F = {0:e}")]
    NotNearOrthogonal(f64),

    #[error("Möbius pole: ||x + w||^2 = {0:e}")]
    MobiusPole(f64),

    #[error("coincident denominator pair: squared chord {0:e}")]
    CoincidentDenominator(f64),

    #[error("coincident initial pair ({0}, {1})")]
    CoincidentPair(usize, usize),

    #[error("query time {t} outside available span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },

    #[error("divergent integral: d - 2p = {0} <= 0 with zero cutoff")]
    DivergentIntegral(f64),

    #[error("quadrature did not converge: estimated error {0:e} after subdivision cap")]
    QuadratureCap(f64),

    #[error("missing Ω group for particle {0}")]
    MissingGroup(usize),

    #[error("γ undefined: order parameter vanishes on every snapshot")]
    GammaUndefined,

    #[error("too many degenerate tuple draws ({0})")]
    TooManyRejections(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
