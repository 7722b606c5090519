//! Empirical law distances, decay fits, the `H` envelope and moment checks.
//!
//! Variation distances use the convention `|mu - nu|_var = sup_{|f| <= 1}
//! |mu(f) - nu(f)|`, with range `[0, 2]` (twice the probabilists' total
//! variation).

mod decay;
mod distance;
mod envelope;
mod histogram;
mod moments;

pub use decay::*;
pub use distance::*;
pub use envelope::*;
pub use histogram::*;
pub use moments::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("histograms use different binnings")]
    BinningMismatch,
    #[error("insufficient signal: {usable} usable points, need at least 4")]
    InsufficientSignal { usable: usize },
    #[error("H diverges at 0 for linear Phi")]
    LinearPhi,
    #[error("paths were not stored")]
    MissingPaths,
    #[error("invalid input: {0}")]
    Invalid(String),
}
