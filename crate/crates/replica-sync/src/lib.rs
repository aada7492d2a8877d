//! Replica-symmetric predictions for Bayesian group synchronization and
//! kernel quadratic assignment, with finite-N checks.
//!
//! The crate is organized around the single-sample channel
//! `y = √λ φ(g*) q^{1/2} + z`: its posterior means drive the state-evolution
//! map, the replica potential and its fixed points. Finite instances are
//! generated, sampled and enumerated for comparison.

pub mod cli;
pub mod error;
pub mod finite;
pub mod group;
pub mod io;
pub mod linalg;
pub mod qa;
pub mod replica;
pub mod quadrature;
pub mod rng;
pub mod single_letter;
pub mod stats;

pub use error::{Error, Result};
