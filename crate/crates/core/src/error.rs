use thiserror::Error;

/// Errors produced by the geometry, quadrature, measure and operator layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("point outside the open unit ball (|z| = {norm})")]
    OutsideBall { norm: f64 },

    #[error("point within {guard:e} of the unit sphere; downstream formulas divide by 1-|z|^2 (|z| = {norm})")]
    BoundaryGuard { norm: f64, guard: f64 },

    #[error("metric overflow: pseudo-hyperbolic distance {rho} too close to 1 for double precision")]
    MetricOverflow { rho: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("basis size {size} exceeds configured cap {cap}")]
    BasisCap { size: usize, cap: usize },

    #[error("quadrature misses requested exactness: worst violated moment {which} off by {violation:.3e}")]
    QuadratureExactness { violation: f64, which: String },

    #[error("no spectral gap at truncation: retained/discarded ratio {ratio:.3e} < required {required:.3e}")]
    NoSpectralGap { ratio: f64, required: f64 },

    #[error("restriction rank {rank} collapsed below quotient dimension {expected}")]
    IllConditionedRestriction { rank: usize, expected: usize },

    #[error("operator basis tag mismatch: {0}")]
    TagMismatch(String),

    #[error("coincident points in input (pair {i}, {j})")]
    CoincidentPoints { i: usize, j: usize },

    #[error("coefficient vector length {got} does not match basis size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("quadrature node escaped the closed ball (|w| = {norm})")]
    NodeEscaped { norm: f64 },

    #[error("point not on the variety: graph residual {residual:e}")]
    NotOnVariety { residual: f64 },

    #[error("point outside the configured flattening neighborhood (|w'-z'| = {dist}, allowed {allowed})")]
    OutsideNeighborhood { dist: f64, allowed: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
