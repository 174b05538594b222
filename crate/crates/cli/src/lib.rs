//! Configuration-driven experiments on top of the `aircomp` library.
//!
//! Every command is a pure function of an [`ExperimentSpec`]; the binary
//! only parses flags and writes the result.

pub mod commands;
pub mod spec;
pub mod validate;

pub use commands::{beamform, latency_sweep, mse_sweep, train, write_csv};
pub use spec::{ExperimentKind, ExperimentSpec};
pub use validate::{validate, Check, Report};
