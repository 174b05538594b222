//! The oracle suite behind the `validate` command.

use std::fmt::Write as _;

use aircomp::channel::ChannelSet;
use aircomp::mmse::{brute_force_mmse, kkt_residuals, mmse_design, BisectionConfig};
use aircomp::optim::{dual_deviation_bound, make_task, peer_uniform, run, xi, RunConfig, TaskKind, TaskSpec, Transport};
use aircomp::rng::{substream, Domain, Stream};
use aircomp::signal::{
    analytic_mse, empirical_mse, peer_averages, received_bias, simulate_round,
    BeamformingSolution, NormalizationStats, Scheme,
};
use aircomp::zf::{zf_design, zf_mse_upper_bound};
use aircomp::{sample_rician, SystemConfig};
use anyhow::Result;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::spec::ExperimentSpec;

/// One named check with its measured statistic and threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
}

impl Check {
    /// Passes when `measured <= limit`.
    pub fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Check { name: name.into(), passed: measured <= limit, measured, limit }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{tag} {:<24} measured={:.6e} limit={:.6e}", c.name, c.measured, c.limit);
        }
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{ok}/{} checks passed", self.checks.len());
        s
    }
}

fn instance(k: usize, nt: usize, snr_db: f64, seed: u64, round: u64) -> Result<(SystemConfig, ChannelSet)> {
    let cfg = SystemConfig { devices: k, antennas: nt, dim: 1, seed, ..Default::default() }.with_snr_db(snr_db);
    let ch = sample_rician(&cfg, round)?;
    Ok((cfg, ch))
}

fn zf_checks(spec: &ExperimentSpec, out: &mut Report) -> Result<()> {
    let (mut exact, mut power, mut bound) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for k in [3usize, 5] {
        for i in 0..spec.validate.instances as u64 {
            let (cfg, ch) = instance(k, 2 * (k - 1), 10.0, spec.seed, 1000 * k as u64 + i)?;
            let sol = zf_design(&ch, cfg.max_power)?;
            let se = sol.eta.sqrt();
            for dev in 0..k {
                let resid: f64 = ch
                    .peers(dev)
                    .map(|l| (aircomp::linalg::inner(ch.link(dev, l), &sol.beams[dev]) - se).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                exact = exact.max(resid / (se * ((k - 1) as f64).sqrt()));
            }
            let powers = sol.powers();
            let b = sol.diagnostics.binding_device.unwrap_or(0);
            power = power.max((powers[b] - cfg.max_power).abs() / cfg.max_power);
            for p in powers {
                power = power.max(p / cfg.max_power - 1.0);
            }
            let mse = analytic_mse(&ch, &sol, cfg.noise_var, 1.0, 1);
            let ub = zf_mse_upper_bound(&ch, cfg.max_power, cfg.noise_var, 1.0, 1)?;
            bound = bound.max((mse - ub) / ub);
        }
    }
    out.checks.push(Check::at_most("zf_exactness", exact, 1e-8));
    out.checks.push(Check::at_most("zf_binding_power", power, 1e-8));
    out.checks.push(Check::at_most("zf_mse_bound", bound, 1e-12));
    Ok(())
}

fn mmse_checks(spec: &ExperimentSpec, out: &mut Report) -> Result<()> {
    let cfg_b = BisectionConfig::default();
    let mut oracle = 0.0f64;
    for (i, (k, nt, snr)) in [(2usize, 1usize, 0.0), (2, 2, 10.0), (3, 2, 5.0)].into_iter().enumerate() {
        let (cfg, ch) = instance(k, nt, snr, spec.seed, 7 + i as u64)?;
        let sol = mmse_design(&ch, cfg.max_power, cfg.noise_var, &cfg_b)?;
        let grid = brute_force_mmse(&ch, cfg.max_power, cfg.noise_var, 1e-3)?;
        let a = analytic_mse(&ch, &sol, cfg.noise_var, 1.0, 1);
        let b = analytic_mse(&ch, &grid, cfg.noise_var, 1.0, 1);
        oracle = oracle.max((a - b).abs() / b);
    }
    out.checks.push(Check::at_most("mmse_oracle_rel", oracle, 0.01));

    let (mut kkt, mut full, mut order) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for i in 0..spec.validate.instances as u64 {
        let (k, nt) = if i % 2 == 0 { (4, 3) } else { (4, 6) };
        let (cfg, ch) = instance(k, nt, 10.0, spec.seed, 500 + i)?;
        let sol = mmse_design(&ch, cfg.max_power, cfg.noise_var, &cfg_b)?;
        let rep = kkt_residuals(&ch, &sol.beams, sol.alpha.unwrap_or(0.0), cfg.noise_var);
        kkt = rep.stationarity_residual.iter().copied().fold(kkt, f64::max);
        let top = sol.powers().into_iter().fold(0.0, f64::max);
        full = full.max(1.0 - top / cfg.max_power);
        let zf = zf_design(&ch, cfg.max_power)?;
        order = order.max(analytic_mse(&ch, &sol, cfg.noise_var, 1.0, 1) - analytic_mse(&ch, &zf, cfg.noise_var, 1.0, 1));
    }
    out.checks.push(Check::at_most("mmse_kkt_stationarity", kkt, 1e-3));
    out.checks.push(Check::at_most("mmse_full_power", full, 1e-4));
    out.checks.push(Check::at_most("mse_ordering", order, 1e-6));
    Ok(())
}

fn scaled_eta(sol: &BeamformingSolution, scale: Option<f64>) -> BeamformingSolution {
    let mut s = sol.clone();
    if let Some(f) = scale {
        s.eta *= f;
    }
    s
}

fn eq6_checks(spec: &ExperimentSpec, out: &mut Report) -> Result<()> {
    let stats = NormalizationStats { mean: 0.0, std: 1.0 };
    for scheme in [Scheme::Zf, Scheme::Mmse] {
        let mut worst = 0.0f64;
        for i in 0..spec.validate.instances as u64 {
            let (cfg, ch) = instance(3, 3, 20.0, spec.seed, 900 + i)?;
            let sol = match scheme {
                Scheme::Zf => zf_design(&ch, cfg.max_power)?,
                _ => mmse_design(&ch, cfg.max_power, cfg.noise_var, &BisectionConfig::default())?,
            };
            let sim = scaled_eta(&sol, spec.validate.inject_eta_scale);
            let mut rng = substream(spec.seed, Domain::Trial, 900 + i, scheme as u64);
            let (emp, se) = empirical_mse(&ch, &sim, stats, cfg.noise_var, 1, spec.validate.trials, &mut rng)?;
            let ana = analytic_mse(&ch, &sol, cfg.noise_var, 1.0, 1);
            worst = worst.max((emp - ana).abs() / se);
        }
        out.checks.push(Check::at_most(&format!("eq6_consistency_{}", scheme.name()), worst, 4.0));
    }
    Ok(())
}

/// Largest `|empirical - expected| / s.e.` over coordinates of the
/// aggregation bias `beta (r_k - peer average)`.
pub fn bias_z_score(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    sigma2: f64,
    mean_s: &[DVector<f64>],
    expected: &[DVector<f64>],
    beta: f64,
    trials: usize,
    rng: &mut Stream,
) -> Result<f64> {
    let k = ch.devices();
    let d = mean_s[0].len();
    let mut sum = vec![DVector::<f64>::zeros(d); k];
    let mut sq = vec![DVector::<f64>::zeros(d); k];
    let unit = NormalizationStats { mean: 0.0, std: 1.0 };
    for _ in 0..trials {
        let s: Vec<DVector<f64>> =
            mean_s.iter().map(|m| m + DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
        let r = simulate_round(ch, sol, &s, unit, sigma2, rng)?;
        let truth = peer_averages(&s);
        for j in 0..k {
            let e = (&r[j] - &truth[j]) * beta;
            sq[j] += e.component_mul(&e);
            sum[j] += e;
        }
    }
    let n = trials as f64;
    let mut worst = 0.0f64;
    for j in 0..k {
        for c in 0..d {
            let m = sum[j][c] / n;
            let var = (sq[j][c] / n - m * m) * n / (n - 1.0);
            worst = worst.max((m - expected[j][c]).abs() / (var / n).sqrt());
        }
    }
    Ok(worst)
}

fn bias_checks(spec: &ExperimentSpec, out: &mut Report) -> Result<()> {
    let beta = 0.5;
    let (cfg, ch) = instance(3, 2, 10.0, spec.seed, 77)?;
    let mean_s: Vec<DVector<f64>> = (0..3).map(|k| DVector::from_fn(2, |c, _| 1.0 - (k + c) as f64 * 0.5)).collect();
    for scheme in [Scheme::Zf, Scheme::Mmse] {
        let sol = match scheme {
            Scheme::Zf => zf_design(&ch, cfg.max_power)?,
            _ => mmse_design(&ch, cfg.max_power, cfg.noise_var, &BisectionConfig::default())?,
        };
        let expected = match scheme {
            Scheme::Zf => vec![DVector::zeros(2); 3],
            _ => received_bias(&ch, &sol, &mean_s, 1.0, beta)?,
        };
        let mut rng = substream(spec.seed, Domain::Trial, 77, scheme as u64);
        let z = bias_z_score(&ch, &sol, cfg.noise_var, &mean_s, &expected, beta, spec.validate.trials, &mut rng)?;
        out.checks.push(Check::at_most(&format!("bias_{}", scheme.name()), z, 3.0));
    }
    Ok(())
}

fn optimizer_checks(spec: &ExperimentSpec, out: &mut Report) -> Result<()> {
    let (k, d, n, beta) = (5usize, 10usize, 200usize, 0.5);
    let task_spec = TaskSpec { heterogeneous: true, target_spread: 1.0, ..TaskSpec::new(TaskKind::QuadraticConsensus, k, d) };
    let task = make_task(&task_spec, &mut substream(spec.seed, Domain::Task, 0, 0))?;
    let mixing = peer_uniform(k, beta)?;
    let system = SystemConfig { devices: k, antennas: 8, dim: d, seed: spec.seed, ..Default::default() }.with_snr_db(10.0);
    let trace = run(&task, &mixing, &Transport::aircomp(Scheme::Zf, &system), &RunConfig::new(n, beta, spec.seed))?;
    let max_mse = trace.mse.iter().copied().fold(0.0, f64::max);
    let x = xi(task.omega, beta, max_mse, k);
    let mut dev_ratio = 0.0f64;
    for (i, devs) in trace.deviations.iter().enumerate().skip(1) {
        let bound = dual_deviation_bound(x, beta, mixing.lambda2, i + 1, k)?;
        dev_ratio = dev_ratio.max(devs.iter().copied().fold(0.0, f64::max) / bound);
    }
    out.checks.push(Check::at_most("dual_deviation_bound", dev_ratio, 1.0));
    let gap_ratio = trace.rows.iter().map(|r| r.gap / r.bound_zf).fold(0.0, f64::max);
    out.checks.push(Check::at_most("suboptimality_bound", gap_ratio, 1.0));
    Ok(())
}

/// Run the whole suite. Deterministic in the spec.
pub fn validate(spec: &ExperimentSpec) -> Result<Report> {
    spec.check()?;
    let mut report = Report::default();
    zf_checks(spec, &mut report)?;
    mmse_checks(spec, &mut report)?;
    eq6_checks(spec, &mut report)?;
    bias_checks(spec, &mut report)?;
    optimizer_checks(spec, &mut report)?;
    Ok(report)
}
