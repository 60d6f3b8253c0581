//! Inverse game theory: recovering game parameters that rationalize observed
//! equilibrium play.

pub mod error;
pub mod games;
pub mod harness;
pub mod markov;
pub mod planner;
pub mod simulacra;
pub mod spaces;

pub use error::{Error, Result};
