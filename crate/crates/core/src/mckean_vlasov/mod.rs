//! McKean-Vlasov dynamics: interacting particles, Picard iteration on
//! measure flows, Girsanov flow comparison and the small-coupling ergodicity
//! sweep.

mod bound;
mod flow;
mod particles;
mod picard;
mod sweep;

pub use bound::*;
pub use flow::*;
pub use particles::*;
pub use picard::*;
pub use sweep::*;

use thiserror::Error;

use crate::ergodicity::DiagError;
use crate::fields::FieldError;
use crate::integrators::IntegratorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McKeanError {
    #[error("measure flows use different time grids or binnings")]
    GridMismatch,
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid input: {0}")]
    Invalid(String),
}
