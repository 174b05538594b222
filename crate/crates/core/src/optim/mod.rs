//! Distributed dual averaging over an aggregation transport.

pub mod bounds;
pub mod domain;
pub mod mixing;
pub mod task;
pub mod transport;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain as RngDomain};
use crate::signal::Scheme;

pub use bounds::{bound_from_summary, dual_deviation_bound, step_size, suboptimality_bound, xi, BoundInputs};
pub use domain::{project, Domain};
pub use mixing::{build_mixing, peer_uniform, MixingSpec};
pub use task::{make_task, Task, TaskKind, TaskSpec};
pub use transport::{Aggregator, RoundOutput, Transport};

/// Per-device optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceState {
    pub z: DVector<f64>,
    pub x: DVector<f64>,
}

/// Scale used in the step-size rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XiRule {
    /// The subgradient bound of the task alone.
    Omega,
    Fixed(f64),
    /// Gradient bound inflated by the largest aggregation error seen so far.
    RunningMax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub rounds: usize,
    pub beta: f64,
    pub xi: XiRule,
    /// Gap rows are written every this many rounds and at the last round.
    pub record_every: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(rounds: usize, beta: f64, seed: u64) -> Self {
        RunConfig { rounds, beta, xi: XiRule::Omega, record_every: 1, seed }
    }
}

/// One trace row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub round: usize,
    pub device: usize,
    /// `f(x̂_k(n)) - f(x*)` for the running average `x̂_k`.
    pub gap: f64,
    pub dual_dev: f64,
    pub mse: f64,
    pub xi: f64,
    pub latency_s: f64,
    pub bound_zf: f64,
    pub bound_mmse: f64,
}

#[derive(Clone, Debug, Default)]
pub struct OptTrace {
    pub rows: Vec<TraceRecord>,
    /// Running averages `x̂_k(N)`.
    pub averages: Vec<DVector<f64>>,
    pub states: Vec<DeviceState>,
    /// `|z̄ - z_k|` after every round, one row per round.
    pub deviations: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
}

impl OptTrace {
    /// Largest final gap over devices.
    pub fn final_gap(&self) -> f64 {
        let last = self.rows.last().map_or(0, |r| r.round);
        self.rows.iter().filter(|r| r.round == last).map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean over devices of the gap at each recorded round.
    pub fn mean_gap_by_round(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some(last) if last.0 == r.round => {
                    last.1 += r.gap;
                    last.2 += 1;
                }
                _ => out.push((r.round, r.gap, 1)),
            }
        }
        out.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect()
    }
}

/// `z_k <- (1 - beta) z_k + beta r_k + g_k` for every device.
pub fn dual_update(
    z: &[DVector<f64>],
    received: &[DVector<f64>],
    grads: &[DVector<f64>],
    beta: f64,
) -> Result<Vec<DVector<f64>>> {
    if z.len() != received.len() || z.len() != grads.len() {
        return Err(Error::Dimension(format!(
            "{} states, {} aggregates, {} gradients",
            z.len(),
            received.len(),
            grads.len()
        )));
    }
    z.iter()
        .zip(received)
        .zip(grads)
        .map(|((zk, rk), gk)| {
            if rk.len() != zk.len() || gk.len() != zk.len() {
                return Err(Error::Dimension("state, aggregate and gradient lengths differ".into()));
            }
            Ok(zk * (1.0 - beta) + rk * beta + gk)
        })
        .collect()
}

/// `z_k <- sum_l W_{kl} z_l + g_k`.
pub fn mix_update(w: &DMatrix<f64>, z: &[DVector<f64>], grads: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if w.nrows() != z.len() || w.ncols() != z.len() || grads.len() != z.len() {
        return Err(Error::Dimension("mixing matrix, states and gradients disagree".into()));
    }
    Ok((0..z.len())
        .map(|k| {
            let mut out = grads[k].clone();
            for (l, zl) in z.iter().enumerate() {
                out.axpy(w[(k, l)], zl, 1.0);
            }
            out
        })
        .collect())
}

fn average(v: &[DVector<f64>]) -> DVector<f64> {
    v.iter().skip(1).fold(v[0].clone(), |acc, x| acc + x) / v.len() as f64
}

/// Run `cfg.rounds` rounds of distributed dual averaging.
pub fn run<A: Aggregator + ?Sized>(
    task: &Task,
    mixing: &MixingSpec,
    aggregator: &A,
    cfg: &RunConfig,
) -> Result<OptTrace> {
    let k_total = task.devices();
    if cfg.rounds == 0 {
        return Err(Error::Config("need at least one round".into()));
    }
    if mixing.p.nrows() != k_total {
        return Err(Error::Dimension(format!("{} mixing rows for {k_total} devices", mixing.p.nrows())));
    }
    if mixing.lambda2 >= 1.0 {
        return Err(Error::Disconnected(mixing.lambda2));
    }
    let record_every = cfg.record_every.max(1);
    let d = task.dim;
    let beta = cfg.beta;
    let bound_inputs = BoundInputs {
        r: task.radius,
        lambda2: mixing.lambda2,
        devices: k_total,
        omega: task.omega,
        beta,
        x_star_norm: task.x_star.norm(),
    };

    let mut z = vec![DVector::<f64>::zeros(d); k_total];
    let first = project(&z[0], 1.0, &task.domain)?;
    let mut x = vec![first; k_total];
    let mut sums = vec![DVector::<f64>::zeros(d); k_total];
    let mut trace = OptTrace::default();
    let mut latency = 0.0;
    let mut max_mse = 0.0f64;
    let mut root_sum = 0.0;

    for n in 1..=cfg.rounds {
        for (s, xk) in sums.iter_mut().zip(&x) {
            *s += xk;
        }
        let grads: Vec<DVector<f64>> = (0..k_total)
            .map(|k| {
                let mut rng = substream(cfg.seed, RngDomain::Gradient, n as u64, k as u64);
                task.stochastic_gradient(k, &x[k], &mut rng)
            })
            .collect();
        let out = aggregator
            .aggregate(n as u64, &z)
            .map_err(|e| Error::Aggregation { round: n, source: Box::new(e) })?;
        z = dual_update(&z, &out.received, &grads, beta)?;

        max_mse = max_mse.max(out.mse);
        root_sum += (out.mse / k_total as f64).sqrt();
        latency += out.latency_s;
        let xi_now = xi(task.omega, beta, max_mse, k_total);
        let xi_step = match cfg.xi {
            XiRule::Omega => task.omega,
            XiRule::Fixed(v) => v,
            XiRule::RunningMax => xi_now,
        };
        let alpha = step_size(n, task.radius, mixing.lambda2, xi_step)?;
        x = z.iter().map(|zk| project(zk, alpha, &task.domain)).collect::<Result<_>>()?;

        let zbar = average(&z);
        let devs: Vec<f64> = z.iter().map(|zk| (&zbar - zk).norm()).collect();
        let dev = devs.iter().copied().fold(0.0, f64::max);
        trace.deviations.push(devs);
        trace.mse.push(out.mse);
        if n % record_every == 0 || n == cfg.rounds {
            let bound_zf = bound_from_summary(Scheme::Zf, &bound_inputs, n, max_mse, root_sum);
            let bound_mmse = bound_from_summary(Scheme::Mmse, &bound_inputs, n, max_mse, root_sum);
            for (k, s) in sums.iter().enumerate() {
                let avg = s / n as f64;
                trace.rows.push(TraceRecord {
                    round: n,
                    device: k,
                    gap: task.value(&avg) - task.f_star,
                    dual_dev: dev,
                    mse: out.mse,
                    xi: xi_now,
                    latency_s: latency,
                    bound_zf,
                    bound_mmse,
                });
            }
        }
    }
    trace.averages = sums.iter().map(|s| s / cfg.rounds as f64).collect();
    trace.states = z.into_iter().zip(x).map(|(z, x)| DeviceState { z, x }).collect();
    Ok(trace)
}
