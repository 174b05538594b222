//! Sweep, training and beamforming experiments.

use std::io::Write;

use aircomp::benchmarks::{round_latency, single_agg_mse, CommScheme, LatencyModel};
use aircomp::mmse::{kkt_residuals, mmse_design, BisectionConfig};
use aircomp::optim::{make_task, peer_uniform, run, Aggregator, RunConfig, Transport};
use aircomp::rng::{substream, Domain};
use aircomp::signal::{analytic_mse, mean_and_se, Scheme};
use aircomp::zf::zf_design;
use aircomp::{sample_rician, SystemConfig};
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::spec::{apply_param, ExperimentSpec};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MseRow {
    pub sweep_var: String,
    pub value: f64,
    pub scheme: String,
    pub mse_mean: Option<f64>,
    pub mse_stderr: Option<f64>,
    pub trials: usize,
    /// Set when the grid point is not a valid system.
    pub skipped: bool,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyRow {
    #[serde(rename = "K")]
    pub devices: usize,
    pub scheme: String,
    pub latency_mean_s: f64,
    pub latency_stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainRow {
    pub scheme: String,
    pub seed: u64,
    pub round: usize,
    pub device: usize,
    pub gap: f64,
    pub dual_dev: f64,
    pub mse: f64,
    pub xi: f64,
    pub latency_s: f64,
    pub bound_zf: f64,
    pub bound_mmse: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeamRow {
    pub scheme: String,
    pub device: usize,
    pub antenna: usize,
    pub re: f64,
    pub im: f64,
    pub power: f64,
    pub eta: f64,
    pub mse: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Write serializable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_scheme(name: &str) -> Result<Scheme> {
    match name {
        "zf" => Ok(Scheme::Zf),
        "mmse" => Ok(Scheme::Mmse),
        "single_agg" => Ok(Scheme::SingleAgg),
        other => bail!("unknown beamforming scheme {other:?}"),
    }
}

/// Analytic sum error of one scheme on one channel draw at unit spread.
pub fn scheme_mse(scheme: Scheme, cfg: &SystemConfig, round: u64, bisection: &BisectionConfig) -> Result<f64> {
    let ch = sample_rician(cfg, round)?;
    let (p0, s2, d) = (cfg.max_power, cfg.noise_var, cfg.dim);
    Ok(match scheme {
        Scheme::Zf => analytic_mse(&ch, &zf_design(&ch, p0)?, s2, 1.0, d),
        Scheme::Mmse => analytic_mse(&ch, &mmse_design(&ch, p0, s2, bisection)?, s2, 1.0, d),
        Scheme::SingleAgg => single_agg_mse(&ch, p0, s2, 1.0, d)?,
    })
}

/// Average analytic error per grid point and scheme over channel draws.
pub fn mse_sweep(spec: &ExperimentSpec) -> Result<Vec<MseRow>> {
    spec.check()?;
    let sweep = spec.sweep.clone().ok_or_else(|| anyhow!("mse sweep needs a [sweep] section"))?;
    let base = spec.system_config()?;
    let schemes = spec.schemes_or(&["zf", "mmse", "single_agg"]);
    let hash = spec.config_hash();
    let bisection = BisectionConfig::default();
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let cfg = apply_param(&base, &sweep.param, value)?;
        let valid = cfg.validate();
        for name in &schemes {
            let scheme = parse_scheme(name)?;
            let mut row = MseRow {
                sweep_var: sweep.param.clone(),
                value,
                scheme: name.clone(),
                mse_mean: None,
                mse_stderr: None,
                trials: spec.trials,
                skipped: valid.is_err(),
                seed: spec.seed,
                config_hash: hash.clone(),
            };
            if valid.is_ok() {
                let samples: Vec<f64> = (0..spec.trials as u64)
                    .into_par_iter()
                    .map(|t| scheme_mse(scheme, &cfg, t, &bisection))
                    .collect::<Result<Vec<_>>>()
                    .with_context(|| format!("{} = {value}, scheme {name}", sweep.param))?;
                let (m, se) = mean_and_se(&samples);
                row.mse_mean = Some(m);
                row.mse_stderr = Some(if se.is_finite() { se } else { 0.0 });
            } else {
                if let Err(e) = &valid {
                    log::warn!("skipping {} = {value}: {e}", sweep.param);
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Per-round latency against the number of devices.
pub fn latency_sweep(spec: &ExperimentSpec) -> Result<Vec<LatencyRow>> {
    spec.check()?;
    let base = spec.system_config()?;
    let grid: Vec<f64> = match &spec.sweep {
        Some(sw) if sw.param == "K" => sw.values.clone(),
        Some(sw) => bail!("latency sweep runs over K, not {}", sw.param),
        None => vec![5.0, 10.0, 20.0, 50.0],
    };
    let schemes = spec.schemes_or(&["aircomp", "single_agg", "digital"]);
    let hash = spec.config_hash();
    let mut rows = Vec::new();
    for &k in &grid {
        let cfg = apply_param(&base, "K", k)?;
        cfg.validate()?;
        for name in &schemes {
            let scheme = match name.as_str() {
                "aircomp" => CommScheme::DistributedAirComp,
                "single_agg" => CommScheme::SingleAggregation,
                "digital" => CommScheme::Digital,
                other => bail!("unknown communication scheme {other:?}"),
            };
            let model = LatencyModel::from_config(scheme, &cfg);
            let samples: Vec<f64> = if scheme == CommScheme::Digital {
                (0..spec.trials as u64)
                    .into_par_iter()
                    .map(|t| round_latency(&model, Some(&sample_rician(&cfg, t)?)))
                    .collect::<aircomp::Result<Vec<_>>>()?
            } else {
                vec![round_latency(&model, None)?]
            };
            let (m, se) = mean_and_se(&samples);
            rows.push(LatencyRow {
                devices: cfg.devices,
                scheme: name.clone(),
                latency_mean_s: m,
                latency_stderr: if se.is_finite() { se } else { 0.0 },
                trials: samples.len(),
                seed: spec.seed,
                config_hash: hash.clone(),
            });
        }
    }
    Ok(rows)
}

/// Build the transport named `name` for one seed.
pub fn transport(name: &str, system: &SystemConfig, bits: u32) -> Result<Transport> {
    Ok(match name {
        "ideal" => Transport::ideal(),
        "aircomp_zf" => Transport::aircomp(Scheme::Zf, system),
        "aircomp_mmse" => Transport::aircomp(Scheme::Mmse, system),
        "single_agg" => Transport::single_agg(system),
        "digital" => Transport::Digital { system: system.clone(), bits },
        other => bail!("unknown transport {other:?}"),
    })
}

/// Run dual averaging for every scheme and seed.
pub fn train(spec: &ExperimentSpec) -> Result<Vec<TrainRow>> {
    spec.check()?;
    let base = spec.system_config()?;
    base.validate()?;
    let ts = &spec.train;
    let task_spec = ts.task_spec(base.devices, base.dim)?;
    let task = make_task(&task_spec, &mut substream(spec.seed, Domain::Task, 0, 0))?;
    let mixing = peer_uniform(base.devices, ts.beta)?;
    let xi = ts.xi_rule()?;
    let schemes = spec.schemes_or(&["ideal", "aircomp_zf", "aircomp_mmse", "single_agg", "digital"]);
    let hash = spec.config_hash();
    let jobs: Vec<(String, u64)> = schemes
        .iter()
        .flat_map(|s| (0..ts.seeds.max(1) as u64).map(move |i| (s.clone(), i)))
        .collect();
    let results: Vec<Vec<TrainRow>> = jobs
        .par_iter()
        .map(|(name, i)| -> Result<Vec<TrainRow>> {
            let seed = spec.seed.wrapping_add(*i);
            let system = SystemConfig { seed, ..base.clone() };
            let agg = transport(name, &system, ts.bits)?;
            let cfg = RunConfig { rounds: ts.rounds, beta: ts.beta, xi, record_every: ts.record_every, seed };
            let trace = run(&task, &mixing, &agg, &cfg).with_context(|| format!("{} seed {seed}", agg.name()))?;
            Ok(trace
                .rows
                .into_iter()
                .map(|r| TrainRow {
                    scheme: name.clone(),
                    seed,
                    round: r.round,
                    device: r.device,
                    gap: r.gap,
                    dual_dev: r.dual_dev,
                    mse: r.mse,
                    xi: r.xi,
                    latency_s: r.latency_s,
                    bound_zf: r.bound_zf,
                    bound_mmse: r.bound_mmse,
                    config_hash: hash.clone(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Beamformers of each scheme for one channel draw.
pub fn beamform(spec: &ExperimentSpec) -> Result<Vec<BeamRow>> {
    spec.check()?;
    let cfg = spec.system_config()?;
    let ch = sample_rician(&cfg, 0)?;
    let hash = spec.config_hash();
    let mut rows = Vec::new();
    for name in spec.schemes_or(&["zf", "mmse"]) {
        let sol = match parse_scheme(&name)? {
            Scheme::Zf => zf_design(&ch, cfg.max_power)?,
            Scheme::Mmse => {
                let sol = mmse_design(&ch, cfg.max_power, cfg.noise_var, &BisectionConfig::default())?;
                let kkt = kkt_residuals(&ch, &sol.beams, sol.alpha.unwrap_or(0.0), cfg.noise_var);
                log::info!("mmse stationarity residuals {:?}", kkt.stationarity_residual);
                sol
            }
            Scheme::SingleAgg => bail!("single aggregation uses one design per receive slot; not supported here"),
        };
        let mse = analytic_mse(&ch, &sol, cfg.noise_var, 1.0, cfg.dim);
        for (k, p) in sol.beams.iter().enumerate() {
            let power = p.norm_squared();
            for (a, c) in p.iter().enumerate() {
                rows.push(BeamRow {
                    scheme: name.clone(),
                    device: k,
                    antenna: a,
                    re: c.re,
                    im: c.im,
                    power,
                    eta: sol.eta,
                    mse,
                    seed: spec.seed,
                    config_hash: hash.clone(),
                });
            }
        }
    }
    Ok(rows)
}
