//! Spectral form factors of continuously monitored chaotic spectra.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectrum`]: SYK Hamiltonians (Jordan–Wigner Majoranas), GUE sampling,
//!   dense Hermitian diagonalization, spectrum files and the large-N SYK
//!   density of states.
//! - [`noise`]: counter-keyed random streams, time grids and exact Wiener
//!   paths with Brownian-bridge refinement.
//! - [`trajectory`]: the energy-monitored state, both in closed form and via
//!   Euler–Maruyama integration of the stochastic master equation, plus
//!   per-trajectory observables.
//! - [`sff`]: every form-factor variant and quenched/annealed ensemble
//!   averaging.
//! - [`analysis`]: dip/plateau extraction, analytic large-N predictions,
//!   Lambert-W dip time, decomposition and parameter sweeps.
//! - [`runner`]: the config-driven experiment runner behind the `sffmon` CLI.

pub mod analysis;
pub mod error;
pub mod noise;
pub mod numeric;
pub mod plot;
pub mod runner;
pub mod sff;
pub mod spectrum;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
