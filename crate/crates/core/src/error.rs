//! Error types shared by all modules.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, FinslerError>;

/// Errors produced by geometry, quadrature and analysis operations.
#[derive(Debug, Error)]
pub enum FinslerError {
    /// A point lies outside the domain of the structure or map.
    #[error("point {point:?} lies outside the domain ({context})")]
    OutsideDomain { point: Vec<f64>, context: String },

    /// An input was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    /// A metric or map specification is invalid (e.g. Randers drift too
    /// large, polytope without the origin in its interior).
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Unsupported dimension/scheme/resolution combination.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// An integrand or sampled function evaluated to a non-finite value.
    #[error("evaluation failed at node {index} ({point:?}): {reason}")]
    Evaluation {
        index: usize,
        point: Vec<f64>,
        reason: String,
    },

    /// The structure violates positivity where it was assumed.
    #[error("invalid Finsler structure: {0}")]
    InvalidStructure(String),

    /// A linear-algebra step failed (singular system, condition cap, ...).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A twist map produced a non-positive Jacobian.
    #[error("invalid twist map: {0}")]
    InvalidTwist(String),

    /// A finite-difference stencil would leave the domain.
    #[error("point {point:?} is closer than {margin} to the domain boundary")]
    InsufficientMargin { point: Vec<f64>, margin: f64 },

    /// A candidate map has a singular differential where invertibility is needed.
    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    /// Blow-up scale too large for the domain.
    #[error("scale error: {0}")]
    Scale(String),

    /// Grid resolution too coarse (disconnected graph, not enough nodes).
    #[error("resolution error: {0}")]
    Resolution(String),
}

impl FinslerError {
    pub(crate) fn outside(point: &[f64], context: impl Into<String>) -> Self {
        FinslerError::OutsideDomain {
            point: point.to_vec(),
            context: context.into(),
        }
    }
}
