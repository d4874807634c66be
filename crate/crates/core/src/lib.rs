//! Numerical laboratory for operator theory on truncated Bergman spaces of
//! the complex unit ball: Möbius geometry, Carleson-measure diagnostics,
//! Toeplitz operators of measure symbols, restriction/extension along
//! analytic varieties, spectral quotient projections and Schatten-norm
//! essential-normality evidence.

pub mod basis;
pub mod error;
pub mod geometry;
pub mod measure;
pub mod operator;
pub mod quadrature;
pub mod variety;

pub use error::{Error, Result};
