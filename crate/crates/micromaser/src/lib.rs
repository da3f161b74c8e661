//! Two-photon micromaser simulation: quantum channels on a truncated Fock space,
//! pure and mixed stationary states, hard and soft walls, metastable long-time
//! dynamics and phase-estimation figures of merit.

pub mod adiabatic;
pub mod channels;
pub mod cli;
pub mod error;
pub mod evolve;
pub mod fock;
pub mod linalg;
pub mod meta;
pub mod metrology;
pub mod steady;
pub mod walls;

pub use error::{Error, Result};
