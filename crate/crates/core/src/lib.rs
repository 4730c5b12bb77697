//! Plaquette random-cluster model on boxes of Z^d with Z_q coefficients, its
//! coupling to Potts lattice gauge theory, and dual-lattice criteria for the
//! null-homology events V_γ.

pub mod algebra;
pub mod cli;
pub mod duality;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod plgt;
pub mod prcm;
pub mod rng;

pub use error::{Error, Result};
