use thiserror::Error;

use crate::fields::RegionKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("point is not on the surface (gap {gap:e})")]
    OffSurface { gap: f64 },

    #[error("diffeomorphism does not map P into Σ (worst gap {violation:e})")]
    NotIntoSurface { violation: f64 },

    #[error("singular jacobian")]
    SingularJacobian,

    #[error("(q, s) = ({q}, {s}) outside the characteristic domain")]
    OutsideDomain { q: f64, s: f64 },

    #[error("not in sliding region ({0:?})")]
    NotSliding(RegionKind),

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("unknown law {0:?}")]
    UnknownLaw(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
