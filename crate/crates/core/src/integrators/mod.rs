//! Time stepping, ensembles, Girsanov reweighting and the Khasminskii estimator.

mod ensemble;
mod girsanov;
mod khasminskii;
pub mod snapshot;
mod step;

pub use ensemble::*;
pub use girsanov::*;
pub use khasminskii::*;
pub use step::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("blowup at t = {t}: non-finite or |coordinate| > 1e12")]
    Blowup { t: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("paths or Brownian increments were not stored")]
    MissingPaths,
    #[error("degenerate reweighting: effective sample size {ess:.1} below 1% of {n}")]
    DegenerateReweighting { ess: f64, n: usize },
}
