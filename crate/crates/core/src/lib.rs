//! Penalized finite-difference solver for obstacle problems of (stochastic)
//! porous medium equations on the periodic torus, with entropy diagnostics.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod model;
pub mod mollifier;
pub mod quadrature;

pub use error::{Error, Result};
pub mod sde_driver;
pub mod solver;
pub mod validation;
