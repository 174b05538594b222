//! Decentralized optimization over analog over-the-air aggregation.
//!
//! The crate covers the radio side (Rician D2D channels, zero-forcing and
//! minimum-error multicast beamforming, the aggregation signal chain) and the
//! optimization side (distributed dual averaging driven by a pluggable
//! aggregation transport, with the matching error and convergence bounds),
//! plus baseline transports and a latency model.

pub mod benchmarks;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod mmse;
pub mod optim;
pub mod rng;
pub mod signal;
pub mod zf;

pub use channel::{sample_rician, ChannelSet, SystemConfig};
pub use error::{Error, Result};
pub use signal::{BeamformingSolution, NormalizationStats, Scheme};
