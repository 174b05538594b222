use thiserror::Error;

/// Errors raised by the simulation and design routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index {index} out of range for {len} devices")]
    Index { index: usize, len: usize },
    #[error("singular channel for device {device} (condition number {cond:e})")]
    SingularChannel { device: usize, cond: f64 },
    #[error("degenerate beamformer: aligned gain sum is zero")]
    DegenerateBeamformer,
    #[error("zero channel vector from device {from} to device {to}")]
    ZeroChannel { from: usize, to: usize },
    #[error("power minimization infeasible: alpha {alpha} exceeds supremum {sup}")]
    Infeasible { alpha: f64, sup: f64 },
    #[error("solver did not converge after {iterations} iterations (best p_max {best_p_max})")]
    SolverFailure {
        iterations: usize,
        best_p_max: f64,
        best: Vec<nalgebra::DVector<num_complex::Complex64>>,
    },
    #[error("instance too large for exhaustive search (K={devices}, Nt={antennas})")]
    InstanceTooLarge { devices: usize, antennas: usize },
    #[error("mixing matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),
    #[error("graph is disconnected (lambda2 = {0})")]
    Disconnected(f64),
    #[error("aggregation failed in round {round}: {source}")]
    Aggregation {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
