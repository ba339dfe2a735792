//! Monte Carlo model of a trapped ¹⁷¹Yb⁺ network node that interleaves
//! heralded ion-photon entanglement with long-lived qubit storage.
//!
//! The crate is organized bottom-up: [`atom`] holds the ten-level state
//! vector, [`photonics`] the emission and polarization optics,
//! [`decoherence`] and [`crosstalk`] the analytic error models,
//! [`sequence`] the stochastic experiment protocols, and [`analysis`]
//! the estimators applied to simulated (or real) count data.

pub mod analysis;
pub mod atom;
pub mod crosstalk;
pub mod decoherence;
pub mod error;
pub mod photonics;
pub mod rng;
pub mod sequence;

pub use error::{Error, Result};
