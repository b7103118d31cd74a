use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::quadratic::DeltaState;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An integrand or field produced NaN or infinity.
    #[error("non-finite value {value} at {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },

    /// The quadratic form has no normal form of the required shape.
    #[error("degenerate quadratic form: {0}")]
    Degenerate(String),

    /// A half step left the small-delta ball.
    #[error("state left the small-delta ball: |delta| = {norm:.6e} >= kappa0 = {kappa0}")]
    Escape {
        norm: f64,
        kappa0: f64,
        state: Box<DeltaState>,
    },

    /// The sampled field does not cover the requested ball plus stencil.
    #[error("sampled field of radius {available} cannot serve a ball of radius {required}")]
    Coverage { required: f64, available: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;
