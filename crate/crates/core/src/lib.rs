//! Numerical laboratory for deterministically growing lattice surfaces and
//! their parabolic scaling limit, the deterministic KPZ equation
//! `∂_t f = β Δf + γ |∇f|²`.

pub mod coeffs;
pub mod driving;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod limit;
pub mod numerics;
pub mod rwalk;

pub use error::{Error, Result};
