//! Simulation and verification toolkit for Byzantine-robust distributed
//! stochastic optimization when the identities of Byzantine workers may
//! change over time.
//!
//! The crate is organised bottom-up:
//!
//! * [`vecmath`] dense vectors and order statistics,
//! * [`objectives`] synthetic objectives and stochastic gradient oracles,
//! * [`aggregators`] robust aggregation rules and an empirical robustness probe,
//! * [`estimators`] the multilevel Monte Carlo (MLMC) gradient estimator,
//!   its fail-safe filter and the worker-momentum baseline,
//! * [`adversary`] Byzantine attacks and identity-switching strategies,
//! * [`optimize`] projected SGD, AdaGrad-Norm and learning-rate formulas,
//! * [`harness`] the round loop, sweeps, CSV export and property suites.

pub mod adversary;
pub mod aggregators;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod objectives;
pub mod optimize;
pub mod rng;
pub mod vecmath;

pub use error::{Error, Result};
pub use vecmath::Vector;
