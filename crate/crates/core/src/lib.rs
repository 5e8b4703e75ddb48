//! Magnetic Dirac operator on a periodic lattice.

pub mod algebra;
pub mod battery;
pub mod error;
pub mod field;
pub mod lattice;
pub mod multiplier;
pub mod propagator;
pub mod quadrature;
pub mod virial;

pub use error::{Error, Result};
