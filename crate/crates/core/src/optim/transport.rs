//! Pluggable aggregation of dual variables across devices.

use nalgebra::{DMatrix, DVector};

use crate::benchmarks::{digital_aggregate, round_latency, single_agg_mse, single_agg_round, CommScheme, LatencyModel};
use crate::channel::{sample_rician, SystemConfig};
use crate::error::{Error, Result};
use crate::mmse::{mmse_design, BisectionConfig};
use crate::rng::{substream, Domain};
use crate::signal::{analytic_mse, compute_stats, normalize, peer_averages, simulate_round, Scheme};
use crate::zf::zf_design;

/// What one device hears in a round.
#[derive(Clone, Debug)]
pub struct RoundOutput {
    /// Aggregate `r_k` per device.
    pub received: Vec<DVector<f64>>,
    /// Sum aggregation error of the round.
    pub mse: f64,
    pub latency_s: f64,
}

/// Anything that turns the devices' dual variables into per-device aggregates.
///
/// Implementations must be deterministic in `(round, z)`: randomness comes
/// from substreams keyed on the round.
pub trait Aggregator {
    fn name(&self) -> String;
    fn aggregate(&self, round: u64, z: &[DVector<f64>]) -> Result<RoundOutput>;
}

/// Built-in transports.
#[derive(Clone, Debug)]
pub enum Transport {
    /// Exact peer averages, or exact `P`-weighted averages when a matrix is given.
    Ideal { weights: Option<DMatrix<f64>> },
    /// Distributed over-the-air aggregation with a fresh design each round.
    AirComp { scheme: Scheme, system: SystemConfig, sigma2: f64, bisection: BisectionConfig },
    /// One receiver per slot, channel inversion.
    SingleAgg { system: SystemConfig, sigma2: f64 },
    /// Error-free quantized payloads over TDMA.
    Digital { system: SystemConfig, bits: u32 },
}

impl Transport {
    pub fn ideal() -> Self {
        Transport::Ideal { weights: None }
    }

    /// AirComp with the system's own noise level.
    pub fn aircomp(scheme: Scheme, system: &SystemConfig) -> Self {
        Transport::AirComp {
            scheme,
            system: system.clone(),
            sigma2: system.noise_var,
            bisection: BisectionConfig::loose(),
        }
    }

    pub fn single_agg(system: &SystemConfig) -> Self {
        Transport::SingleAgg { system: system.clone(), sigma2: system.noise_var }
    }

    pub fn digital(system: &SystemConfig) -> Self {
        Transport::Digital { system: system.clone(), bits: 16 }
    }

    /// Latency scheme used for accounting.
    pub fn comm_scheme(&self) -> Option<CommScheme> {
        match self {
            Transport::Ideal { .. } => None,
            Transport::AirComp { .. } => Some(CommScheme::DistributedAirComp),
            Transport::SingleAgg { .. } => Some(CommScheme::SingleAggregation),
            Transport::Digital { .. } => Some(CommScheme::Digital),
        }
    }
}

fn check_devices(system: &SystemConfig, z: &[DVector<f64>]) -> Result<()> {
    if z.len() != system.devices {
        return Err(Error::Dimension(format!("{} states for {} devices", z.len(), system.devices)));
    }
    if z.iter().any(|v| v.len() != system.dim) {
        return Err(Error::Dimension(format!("state length differs from D = {}", system.dim)));
    }
    Ok(())
}

fn weighted(p: &DMatrix<f64>, z: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if p.nrows() != z.len() || p.ncols() != z.len() {
        return Err(Error::Dimension(format!("{}x{} weights for {} devices", p.nrows(), p.ncols(), z.len())));
    }
    Ok((0..z.len())
        .map(|k| {
            let mut r = DVector::zeros(z[0].len());
            for (l, zl) in z.iter().enumerate() {
                r.axpy(p[(k, l)], zl, 1.0);
            }
            r
        })
        .collect())
}

fn squared_error(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum()
}

impl Aggregator for Transport {
    fn name(&self) -> String {
        match self {
            Transport::Ideal { .. } => "ideal".into(),
            Transport::AirComp { scheme, .. } => format!("aircomp_{}", scheme.name()),
            Transport::SingleAgg { .. } => "single_agg".into(),
            Transport::Digital { .. } => "digital".into(),
        }
    }

    fn aggregate(&self, round: u64, z: &[DVector<f64>]) -> Result<RoundOutput> {
        match self {
            Transport::Ideal { weights } => {
                if z.len() < 2 {
                    return Err(Error::Dimension("need at least two devices".into()));
                }
                let received = match weights {
                    Some(p) => weighted(p, z)?,
                    None => peer_averages(z),
                };
                Ok(RoundOutput { received, mse: 0.0, latency_s: 0.0 })
            }
            Transport::AirComp { scheme, system, sigma2, bisection } => {
                check_devices(system, z)?;
                let ch = sample_rician(system, round)?;
                let sol = match scheme {
                    Scheme::Zf => zf_design(&ch, system.max_power)?,
                    Scheme::Mmse => mmse_design(&ch, system.max_power, *sigma2, bisection)?,
                    Scheme::SingleAgg => {
                        return Err(Error::Config("single aggregation has its own transport".into()))
                    }
                };
                let stats = compute_stats(z)?;
                let s: Vec<_> = z.iter().map(|v| normalize(v, stats)).collect();
                let mut rng = substream(system.seed, Domain::Noise, round, 0);
                let received = simulate_round(&ch, &sol, &s, stats, *sigma2, &mut rng)?;
                let mse = analytic_mse(&ch, &sol, *sigma2, stats.std, system.dim);
                let latency_s = round_latency(&LatencyModel::from_config(CommScheme::DistributedAirComp, system), None)?;
                Ok(RoundOutput { received, mse, latency_s })
            }
            Transport::SingleAgg { system, sigma2 } => {
                check_devices(system, z)?;
                let ch = sample_rician(system, round)?;
                let stats = compute_stats(z)?;
                let s: Vec<_> = z.iter().map(|v| normalize(v, stats)).collect();
                let mut rng = substream(system.seed, Domain::Noise, round, 0);
                let received = single_agg_round(&ch, system.max_power, &s, stats, *sigma2, &mut rng)?;
                let mse = single_agg_mse(&ch, system.max_power, *sigma2, stats.std, system.dim)?;
                let latency_s = round_latency(&LatencyModel::from_config(CommScheme::SingleAggregation, system), None)?;
                Ok(RoundOutput { received, mse, latency_s })
            }
            Transport::Digital { system, bits } => {
                check_devices(system, z)?;
                if *bits == 0 {
                    return Err(Error::Config("need at least one bit per coefficient".into()));
                }
                let received = digital_aggregate(z, *bits);
                let mse = squared_error(&received, &peer_averages(z));
                let ch = sample_rician(system, round)?;
                let model = LatencyModel { bits: *bits, ..LatencyModel::from_config(CommScheme::Digital, system) };
                let latency_s = round_latency(&model, Some(&ch))?;
                Ok(RoundOutput { received, mse, latency_s })
            }
        }
    }
}
