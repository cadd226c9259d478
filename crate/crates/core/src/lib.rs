//! Numerical core for time-fractional subdiffusion on the unit square.
//!
//! The crate covers the forward problem (P1 finite elements in space,
//! backward-Euler convolution quadrature in time), a modal reference
//! solution for constant diffusivity, and the three inverse stages:
//! recovering the fractional order from small-time boundary data,
//! removing the initial-data contribution by rational continuation, and
//! recovering a piecewise-constant diffusion coefficient by level-set
//! descent.

pub mod continuation;
pub mod error;
pub mod levelset;
pub mod meshfem;
pub mod order_recovery;
pub mod quadrature;
pub mod spectral;
pub mod timefrac;

pub use error::{Error, Result};
