//! Concrete drift, diffusion, Lyapunov and interaction families.

pub mod basic;
mod damped_kinetic;
mod interaction;
mod lyapunov;
mod riesz;

pub use damped_kinetic::*;
pub use interaction::*;
pub use lyapunov::*;
pub use riesz::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel value {value} exceeds declared bound {bound} at a sampled point")]
    KernelBoundViolated { value: f64, bound: f64 },
}
