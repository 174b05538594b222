//! Minimum-error multicast beamforming through the aligned-fraction
//! reformulation: bisection over the fraction with a convex min-power
//! subproblem at every step.

mod barrier;
mod kkt;
mod oracle;

pub use barrier::{write_trace_csv, BarrierOptions, Prepared, TraceRow};
pub use kkt::{centroid_direction, cosine, kkt_residuals, CentroidMode, KktReport};
pub use oracle::brute_force_mmse;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{complexify, inner, norm2, CVec};
use crate::signal::{BeamformingSolution, Diagnostics, Scheme};
use crate::zf::zf_design;
use barrier::{Iterate, Outcome};

/// Tolerances and caps for the outer bisection and the inner solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisectionConfig {
    pub eps_alpha: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig { eps_alpha: 1e-6, inner_tol: 1e-8, max_outer: 100, max_inner: 400 }
    }
}

impl BisectionConfig {
    /// Looser settings for per-round redesign inside training loops.
    pub fn loose() -> Self {
        BisectionConfig { eps_alpha: 1e-6, inner_tol: 1e-6, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_alpha > 0.0 && self.inner_tol > 0.0) || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Config(format!("invalid bisection settings {self:?}")));
        }
        Ok(())
    }
}

/// `(sum Re h_{kl}ᴴ p_k, sum |h_{kl}ᴴ p_k|^2)` over all ordered pairs.
pub fn aligned_sums(ch: &ChannelSet, beams: &[CVec]) -> (f64, f64) {
    let mut a = 0.0;
    let mut q = 0.0;
    for k in 0..ch.devices() {
        for l in ch.peers(k) {
            let g = inner(ch.link(k, l), &beams[k]);
            a += g.re;
            q += g.norm_sqr();
        }
    }
    (a, q)
}

/// Aligned fraction `A / sqrt(K sigma^2 + Q)` of a set of beamformers.
pub fn aligned_fraction(ch: &ChannelSet, beams: &[CVec], sigma2: f64) -> f64 {
    let (a, q) = aligned_sums(ch, beams);
    a / (ch.devices() as f64 * sigma2 + q).sqrt()
}

/// Error-minimizing alignment factor for fixed beamformers.
pub fn conditional_eta(ch: &ChannelSet, beams: &[CVec], sigma2: f64) -> Result<f64> {
    let (a, q) = aligned_sums(ch, beams);
    let num = 2.0 * ch.devices() as f64 * sigma2 + 2.0 * q;
    let den = 2.0 * a;
    if den.abs() <= f64::MIN_POSITIVE || !den.is_finite() {
        return Err(Error::DegenerateBeamformer);
    }
    Ok((num / den).powi(2))
}

/// Solution of the min-power subproblem at a fixed aligned fraction.
#[derive(Clone, Debug)]
pub struct PowerMinSolution {
    pub beams: Vec<CVec>,
    pub p_max: f64,
    pub kkt: KktReport,
    pub newton_iterations: usize,
    pub trace: Vec<TraceRow>,
}

fn to_beams(it: &Iterate) -> Vec<CVec> {
    it.x.iter().map(complexify).collect()
}

fn options(cfg: &BisectionConfig, record: bool) -> BarrierOptions {
    BarrierOptions { tol: cfg.inner_tol, max_newton: cfg.max_inner, record }
}

fn solve_prepared(
    ch: &ChannelSet,
    pr: &Prepared,
    alpha: f64,
    sigma2: f64,
    cfg: &BisectionConfig,
    record: bool,
) -> Result<PowerMinSolution> {
    let run = barrier::run(pr, alpha, sigma2, None, options(cfg, record))?;
    let Outcome::Solved(it) = run.outcome else { unreachable!("no budget given") };
    let beams = to_beams(&it);
    let p_max = beams.iter().map(norm2).fold(0.0, f64::max);
    let kkt = kkt_residuals(ch, &beams, alpha, sigma2);
    Ok(PowerMinSolution { beams, p_max, kkt, newton_iterations: run.newton, trace: run.trace })
}

/// Minimize the largest per-device power subject to the aligned fraction
/// reaching `alpha`.
pub fn solve_power_min(
    ch: &ChannelSet,
    alpha: f64,
    sigma2: f64,
    cfg: &BisectionConfig,
) -> Result<PowerMinSolution> {
    cfg.validate()?;
    let pr = Prepared::new(ch)?;
    solve_prepared(ch, &pr, alpha, sigma2, cfg, false)
}

/// Same as [`solve_power_min`] with the Newton-iteration log filled in.
pub fn solve_power_min_traced(
    ch: &ChannelSet,
    alpha: f64,
    sigma2: f64,
    cfg: &BisectionConfig,
) -> Result<PowerMinSolution> {
    cfg.validate()?;
    let pr = Prepared::new(ch)?;
    solve_prepared(ch, &pr, alpha, sigma2, cfg, true)
}

/// Supremum of the aligned fraction on a channel set.
pub fn alpha_supremum(ch: &ChannelSet) -> Result<f64> {
    Ok(Prepared::new(ch)?.alpha_sup())
}

enum Decision {
    Feasible(Vec<CVec>),
    Infeasible,
}

fn decide(pr: &Prepared, alpha: f64, p0: f64, sigma2: f64, cfg: &BisectionConfig, iters: &mut usize) -> Result<Decision> {
    let run = match barrier::run(pr, alpha, sigma2, Some(p0), options(cfg, false)) {
        Ok(r) => r,
        Err(Error::SolverFailure { iterations, .. }) => {
            // undecided after the cap: treat as infeasible, which only
            // makes the bracket conservative
            *iters += iterations;
            return Ok(Decision::Infeasible);
        }
        Err(e) => return Err(e),
    };
    *iters += run.newton;
    Ok(match run.outcome {
        Outcome::Feasible(it) | Outcome::Solved(it) => Decision::Feasible(to_beams(&it)),
        Outcome::Infeasible => Decision::Infeasible,
    })
}

fn scale_to_budget(beams: &mut [CVec], p0: f64) {
    let pm = beams.iter().map(norm2).fold(0.0, f64::max);
    if pm > 0.0 {
        let s = Complex64::new((p0 / pm).sqrt(), 0.0);
        for b in beams.iter_mut() {
            *b *= s;
        }
    }
}

/// Minimum-error design: the largest aligned fraction reachable within the
/// power budget, then the matching alignment factor.
pub fn mmse_design(ch: &ChannelSet, p0: f64, sigma2: f64, cfg: &BisectionConfig) -> Result<BeamformingSolution> {
    cfg.validate()?;
    if !(p0 > 0.0 && sigma2 > 0.0) {
        return Err(Error::Config(format!("P0 and sigma2 must be positive ({p0}, {sigma2})")));
    }
    let pr = Prepared::new(ch)?;
    let sup = pr.alpha_sup();
    let mut iters = 0usize;

    // the ZF design is feasible at its own fraction, which seeds the lower end
    let zf = zf_design(ch, p0).ok();
    let mut lo = 0.0;
    let mut incumbent: Option<Vec<CVec>> = None;
    if let Some(z) = &zf {
        let f = aligned_fraction(ch, &z.beams, sigma2);
        if f > 0.0 && f < sup {
            lo = f;
            incumbent = Some(z.beams.clone());
        }
    }

    // upper end: doubling from one, capped by the supremum where the
    // subproblem becomes infeasible
    let mut hi = f64::NAN;
    let mut cand = 1.0f64;
    let mut bracket_failed = true;
    for _ in 0..=60 {
        if cand >= sup {
            hi = sup;
            bracket_failed = false;
            break;
        }
        if cand > lo {
            match decide(&pr, cand, p0, sigma2, cfg, &mut iters)? {
                Decision::Feasible(b) => {
                    lo = cand;
                    incumbent = Some(b);
                }
                Decision::Infeasible => {
                    hi = cand;
                    bracket_failed = false;
                    break;
                }
            }
        }
        cand *= 2.0;
    }

    let mut outer = 0;
    if !bracket_failed {
        while hi - lo >= cfg.eps_alpha && outer < cfg.max_outer {
            outer += 1;
            let mid = 0.5 * (lo + hi);
            match decide(&pr, mid, p0, sigma2, cfg, &mut iters)? {
                Decision::Feasible(b) => {
                    lo = mid;
                    incumbent = Some(b);
                }
                Decision::Infeasible => hi = mid,
            }
        }
    }

    // optimal point at the final fraction, pushed to the power limit
    let mut beams = match (lo > 0.0).then(|| solve_prepared(ch, &pr, lo, sigma2, cfg, false)) {
        Some(Ok(sol)) => {
            iters += sol.newton_iterations;
            sol.beams
        }
        _ => match incumbent.clone() {
            Some(b) => b,
            None => pr.dir.iter().map(complexify).collect(),
        },
    };
    scale_to_budget(&mut beams, p0);
    if let Some(inc) = incumbent.as_mut() {
        scale_to_budget(inc, p0);
        if aligned_fraction(ch, inc, sigma2) > aligned_fraction(ch, &beams, sigma2) {
            beams = inc.clone();
        }
    }
    if let Some(z) = &zf {
        if aligned_fraction(ch, &z.beams, sigma2) > aligned_fraction(ch, &beams, sigma2) {
            beams = z.beams.clone();
        }
    }
    // sign convention: non-negative aligned sum
    if aligned_sums(ch, &beams).0 < 0.0 {
        for b in beams.iter_mut() {
            *b = -b.clone();
        }
    }
    let eta = conditional_eta(ch, &beams, sigma2)?;
    let kkt = kkt_residuals(ch, &beams, lo.max(f64::MIN_POSITIVE), sigma2);
    let residual = kkt.stationarity_residual.iter().fold(0.0, |a: f64, &b| a.max(b));
    if bracket_failed {
        log::warn!("could not bracket the aligned fraction; returning the full-power iterate");
    }
    Ok(BeamformingSolution {
        scheme: Scheme::Mmse,
        beams,
        eta,
        alpha: Some(lo),
        diagnostics: Diagnostics { iterations: iters, residual, binding_device: None, bracket_failed },
    })
}

/// Minimum power reachable at fraction `alpha`, for certificate checks.
pub fn min_power_at(ch: &ChannelSet, alpha: f64, sigma2: f64, cfg: &BisectionConfig) -> Result<f64> {
    match solve_power_min(ch, alpha, sigma2, cfg) {
        Ok(s) => Ok(s.p_max),
        Err(Error::Infeasible { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Column-sum vectors `c_k = H_k 1`, exposed for diagnostics.
pub fn column_sums(ch: &ChannelSet) -> Vec<DVector<Complex64>> {
    (0..ch.devices()).map(|k| ch.column_sum(k)).collect()
}
