//! Spectral theory of quasi-periodic Jacobi-type operators with trigonometric
//! hopping: finite sections, transfer cocycles, Lagrangian phases, center
//! splittings and labeled gaps.

pub mod cocycles;
pub mod error;
pub mod gaps;
pub mod lagrangian;
pub mod linalg;
pub mod operators;
pub mod splitting;
pub mod verify;

pub use error::{Error, Result};
