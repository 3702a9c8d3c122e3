//! Error types shared across the library.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced while constructing densities, gridding them, or running
/// checks on incompatible inputs.
#[derive(Debug, Error)]
pub enum Error {
    /// A point or parameter vector has the wrong number of coordinates.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A parameter failed validation; `field` names the offending input.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// Two grids that must share a lattice (box and resolution) do not.
    #[error("grid lattice mismatch: {reason}")]
    LatticeMismatch { reason: String },

    /// A probability level outside the open unit interval.
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),

    /// A density could not be represented on the requested grid.
    #[error("degenerate grid: {reason}")]
    DegenerateGrid { reason: String },

    /// An operation only defined for certain analytic families was asked of
    /// another; the caller should grid the density instead.
    #[error("`{operation}` does not support the {family} family")]
    UnsupportedFamily {
        operation: &'static str,
        family: &'static str,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn degenerate(reason: impl Into<String>) -> Self {
        Error::DegenerateGrid {
            reason: reason.into(),
        }
    }

    pub(crate) fn lattice(reason: impl Into<String>) -> Self {
        Error::LatticeMismatch {
            reason: reason.into(),
        }
    }
}
