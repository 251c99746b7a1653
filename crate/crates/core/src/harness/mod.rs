//! Experiment driver: run descriptions, the round loop, sweeps, CSV export
//! and the built-in verification suites.

pub mod config;
pub mod export;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{LrConfig, Method, RunConfig};
pub use run::{run, run_with_seed, RoundRecord, RunSummary, RunTrace};
pub use sweep::{sweep, Axis, SweepPoint, SweepRun};
pub use verify::{verify, Check, VerifyReport, SUITES};
