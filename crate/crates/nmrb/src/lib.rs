//! Simulation and analysis toolkit for randomized benchmarking under
//! correlated (non-Markovian) noise.
//!
//! The crate is organized bottom-up:
//! - [`core`]: dense complex linear algebra helpers, quadrature, tolerances
//! - [`rng`]: seeded, stream-splittable randomness
//! - [`clifford`]: the single-qubit Clifford group
//! - [`density`]: density operators on E⊗S
//! - [`channels`]: Kraus channels, environment superoperators, twirling
//! - [`noise`]: concrete noise models and step schedules
//! - [`asf`]: average sequence fidelity engines (analytical, corollaries, oracle)
//! - [`rbsim`]: Monte-Carlo protocol simulation
//! - [`analysis`]: exponential fits, non-Markovianity measures, diagnostics
//! - [`config`] / [`output`]: experiment configs and result files

pub mod analysis;
pub mod asf;
pub mod channels;
pub mod clifford;
pub mod config;
pub mod core;
pub mod density;
pub mod error;
pub mod noise;
pub mod output;
pub mod rbsim;
pub mod rng;

pub use error::{NmrbError, Result};
