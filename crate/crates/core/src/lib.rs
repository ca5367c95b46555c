//! Numerical laboratory for resonant plans, averaging normal forms, homoclinic dynamics
//! and weak KAM solutions of nearly integrable Hamiltonians.

pub mod action;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod melnikov;
pub mod normalform;
pub mod resonance;
pub mod symplectic;
pub mod weakkam;

pub use error::{Error, Result};
