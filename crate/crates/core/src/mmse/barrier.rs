//! Log-barrier interior-point solver for the min-max-power problem
//!
//! ```text
//! minimize t  s.t.  alpha * sqrt(K sigma^2 + sum_k x_kᵀ G_k x_k) <= sum_k c_kᵀ x_k,
//!                   |x_k|^2 <= t
//! ```
//!
//! over real-composite beamformers `x_k = (Re p_k, Im p_k)`. The noise is
//! normalized to one internally and the result rescaled.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{complexify, realify, realify_hermitian, CMat, CVec};

/// One row of the optional Newton-iteration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub p_max: f64,
    pub soc_slack: f64,
    pub stationarity: f64,
}

/// Write solver iterations as CSV with header `iter,p_max,soc_slack,stationarity`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,p_max,soc_slack,stationarity")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.p_max, r.soc_slack, r.stationarity)?;
    }
    Ok(())
}

/// Per-channel data shared by every subproblem along the bisection.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub(crate) devices: usize,
    /// Realified column sums `c_k`.
    pub(crate) chat: Vec<DVector<f64>>,
    /// Realified `H_k H_kᴴ`.
    pub(crate) ghat: Vec<DMatrix<f64>>,
    /// Complex `c_k` and `H_k H_kᴴ` eigenpairs, used by the grid oracle.
    pub(crate) c: Vec<CVec>,
    pub(crate) eig: Vec<(DVector<f64>, CMat)>,
    /// Realified `(H_k H_kᴴ)⁺ c_k`, the direction attaining the supremum.
    pub(crate) dir: Vec<DVector<f64>>,
    /// Supremum of the aligned fraction squared.
    pub(crate) sup2: f64,
}

impl Prepared {
    pub fn new(ch: &ChannelSet) -> Result<Self> {
        let k_total = ch.devices();
        let mut chat = Vec::with_capacity(k_total);
        let mut ghat = Vec::with_capacity(k_total);
        let mut cs = Vec::with_capacity(k_total);
        let mut eig = Vec::with_capacity(k_total);
        let mut dir = Vec::with_capacity(k_total);
        let mut sup2 = 0.0;
        for k in 0..k_total {
            let hk = ch.device_matrix(k)?;
            let g = &hk * hk.adjoint();
            let c = ch.column_sum(k);
            let se = SymmetricEigen::new(g.clone());
            let lmax = se.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
            let mut d = CVec::zeros(ch.antennas());
            for (i, &lam) in se.eigenvalues.iter().enumerate() {
                if lam > 1e-12 * lmax {
                    let u = se.eigenvectors.column(i);
                    let ci = u.adjoint() * &c;
                    d += u * (ci[(0, 0)] / lam);
                }
            }
            sup2 += crate::linalg::inner(&c, &d).re;
            chat.push(realify(&c));
            ghat.push(realify_hermitian(&g));
            dir.push(realify(&d));
            cs.push(c);
            eig.push((se.eigenvalues, se.eigenvectors));
        }
        Ok(Prepared { devices: k_total, chat, ghat, c: cs, eig, dir, sup2 })
    }

    /// Supremum of the aligned fraction over all beamformers.
    pub fn alpha_sup(&self) -> f64 {
        self.sup2.sqrt()
    }
}

/// Solver knobs.
#[derive(Clone, Copy, Debug)]
pub struct BarrierOptions {
    /// Relative duality-gap target.
    pub tol: f64,
    /// Cap on Newton iterations across all barrier stages.
    pub max_newton: usize,
    pub record: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct Iterate {
    pub x: Vec<DVector<f64>>,
    pub t: f64,
}

pub(crate) enum Outcome {
    /// Central-path point at the requested accuracy.
    Solved(Iterate),
    /// A strictly feasible point within the power budget.
    Feasible(Iterate),
    /// Certified that the optimum exceeds the budget.
    Infeasible,
}

pub(crate) struct Run {
    pub outcome: Outcome,
    pub newton: usize,
    pub trace: Vec<TraceRow>,
}

struct Eval {
    a: f64,
    q: f64,
    s: Vec<f64>,
    gx: Vec<DVector<f64>>,
}

struct Solver<'a> {
    pr: &'a Prepared,
    alpha: f64,
    /// K sigma^2 in normalized units, i.e. K.
    ksig: f64,
}

impl<'a> Solver<'a> {
    fn eval(&self, it: &Iterate) -> Option<Eval> {
        let mut a = 0.0;
        let mut qsum = 0.0;
        let mut s = Vec::with_capacity(self.pr.devices);
        let mut gx = Vec::with_capacity(self.pr.devices);
        for k in 0..self.pr.devices {
            let g = &self.pr.ghat[k] * &it.x[k];
            a += self.pr.chat[k].dot(&it.x[k]);
            qsum += it.x[k].dot(&g);
            let sk = it.t - it.x[k].norm_squared();
            if !(sk > 0.0) {
                return None;
            }
            s.push(sk);
            gx.push(g);
        }
        let q = a * a - self.alpha * self.alpha * (self.ksig + qsum);
        if !(a > 0.0 && q > 0.0) {
            return None;
        }
        Some(Eval { a, q, s, gx })
    }

    fn barrier(&self, tau: f64, it: &Iterate, e: &Eval) -> f64 {
        tau * it.t - e.q.ln() - e.s.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Gradient and Newton step of the barrier objective at `tau`.
    fn newton(&self, tau: f64, it: &Iterate, e: &Eval) -> Option<(Vec<DVector<f64>>, f64, f64)> {
        let k_total = self.pr.devices;
        let a2 = self.alpha * self.alpha;
        let mut gxs = Vec::with_capacity(k_total);
        let mut gt = tau;
        let mut u2 = Vec::with_capacity(k_total);
        let mut ev = Vec::with_capacity(k_total);
        let mut htt = 0.0;
        let mut chols: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let x = &it.x[k];
            let sk = e.s[k];
            let grad_q = &self.pr.chat[k] * (2.0 * e.a) - &e.gx[k] * (2.0 * a2);
            gxs.push(-&grad_q / e.q + x * (2.0 / sk));
            gt -= 1.0 / sk;
            htt += 1.0 / (sk * sk);
            ev.push(x * (-2.0 / (sk * sk)));
            let mut b = &self.pr.ghat[k] * (2.0 * a2 / e.q);
            for i in 0..b.nrows() {
                b[(i, i)] += 2.0 / sk;
            }
            b.ger(4.0 / (sk * sk), x, x, 1.0);
            chols.push(Cholesky::new(b)?);
            u2.push(grad_q);
        }
        let bsolve = |v: &[DVector<f64>]| -> Vec<DVector<f64>> {
            v.iter().zip(chols.iter()).map(|(vk, c)| c.solve(vk)).collect()
        };
        let dot = |a: &[DVector<f64>], b: &[DVector<f64>]| -> f64 {
            a.iter().zip(b.iter()).map(|(x, y)| x.dot(y)).sum()
        };
        let bu1 = bsolve(&self.pr.chat);
        let bu2 = bsolve(&u2);
        let c11 = -e.q / 2.0 + dot(&self.pr.chat, &bu1);
        let c12 = dot(&self.pr.chat, &bu2);
        let c22 = e.q * e.q + dot(&u2, &bu2);
        let det = c11 * c22 - c12 * c12;
        if !(det.is_finite()) || det == 0.0 {
            return None;
        }
        let minv = |v: &[DVector<f64>]| -> Vec<DVector<f64>> {
            let bv = bsolve(v);
            let r1 = dot(&self.pr.chat, &bv);
            let r2 = dot(&u2, &bv);
            let w1 = (c22 * r1 - c12 * r2) / det;
            let w2 = (-c12 * r1 + c11 * r2) / det;
            bv.iter()
                .zip(bu1.iter().zip(bu2.iter()))
                .map(|(b, (p1, p2))| b - p1 * w1 - p2 * w2)
                .collect()
        };
        let mg = minv(&gxs);
        let me = minv(&ev);
        let schur = htt - dot(&ev, &me);
        if !(schur > 0.0) {
            return None;
        }
        let dt = (-gt + dot(&ev, &mg)) / schur;
        let dx: Vec<DVector<f64>> = mg.iter().zip(me.iter()).map(|(g, m)| -(g + m * dt)).collect();
        let dec = -(dot(&gxs, &dx) + gt * dt);
        if !dec.is_finite() {
            return None;
        }
        Some((dx, dt, dec))
    }

    fn start(&self) -> Iterate {
        let sup2 = self.pr.sup2;
        let a2 = self.alpha * self.alpha;
        let s2 = 2.0 * a2 * self.ksig / (sup2 * (sup2 - a2));
        let s = s2.sqrt();
        let x: Vec<DVector<f64>> = self.pr.dir.iter().map(|d| d * s).collect();
        let pm = x.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);
        let t = if pm > 0.0 { 1.5 * pm } else { 1e-12 };
        Iterate { x, t }
    }
}

/// Run the barrier method. `budget` is in normalized (unit-noise) power units;
/// with `Some(budget)` the run stops as soon as feasibility is decided.
pub(crate) fn run(
    pr: &Prepared,
    alpha: f64,
    sigma2: f64,
    budget: Option<f64>,
    opts: BarrierOptions,
) -> Result<Run> {
    // Work in units where the starting point has t = 1: the problem is
    // invariant under x -> r x, sigma2 -> r^2 sigma2, t -> r^2 t.
    let k_total = pr.devices as f64;
    let a2 = alpha * alpha;
    let dmax = pr.dir.iter().map(|d| d.norm_squared()).fold(0.0, f64::max);
    let ksig = if a2 < pr.sup2 && dmax > 0.0 {
        pr.sup2 * (pr.sup2 - a2) / (3.0 * a2 * dmax)
    } else {
        k_total
    };
    let r2 = sigma2 * k_total / ksig;
    let r = r2.sqrt();
    let mut out = run_scaled(pr, alpha, ksig, budget.map(|b| b / r2), opts).map_err(|e| match e {
        Error::SolverFailure { iterations, best_p_max, best } => Error::SolverFailure {
            iterations,
            best_p_max: best_p_max * r2,
            best: best.into_iter().map(|b| b * num_complex::Complex64::new(r, 0.0)).collect(),
        },
        other => other,
    })?;
    let back = |it: &mut Iterate| {
        for x in it.x.iter_mut() {
            *x *= r;
        }
        it.t *= r2;
    };
    match &mut out.outcome {
        Outcome::Solved(it) | Outcome::Feasible(it) => back(it),
        Outcome::Infeasible => {}
    }
    for row in out.trace.iter_mut() {
        row.p_max *= r2;
        row.soc_slack *= r;
    }
    Ok(out)
}

fn run_scaled(
    pr: &Prepared,
    alpha: f64,
    ksig: f64,
    budget: Option<f64>,
    opts: BarrierOptions,
) -> Result<Run> {
    if !(alpha > 0.0) {
        return Err(Error::Data(format!("alpha must be positive, got {alpha}")));
    }
    if alpha * alpha >= pr.sup2 * (1.0 - 1e-12) {
        if budget.is_some() {
            return Ok(Run { outcome: Outcome::Infeasible, newton: 0, trace: Vec::new() });
        }
        return Err(Error::Infeasible { alpha, sup: pr.alpha_sup() });
    }
    let sv = Solver { pr, alpha, ksig };
    let m = pr.devices as f64 + 2.0;
    let mut it = sv.start();
    let mut tau = m / it.t;
    let mut newton = 0usize;
    let mut trace = Vec::new();
    let p_max = |it: &Iterate| it.x.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);

    loop {
        // centering at tau
        let mut e = sv.eval(&it).expect("iterate left the interior");
        let mut stage_steps = 0;
        loop {
            if let Some(b) = budget {
                if p_max(&it) <= b {
                    return Ok(Run { outcome: Outcome::Feasible(it), newton, trace });
                }
            }
            if newton >= opts.max_newton {
                return Err(Error::SolverFailure {
                    iterations: newton,
                    best_p_max: p_max(&it),
                    best: it.x.iter().map(complexify).collect(),
                });
            }
            let Some((dx, dt, dec)) = sv.newton(tau, &it, &e) else {
                break;
            };
            newton += 1;
            if opts.record {
                trace.push(TraceRow {
                    iter: newton,
                    p_max: p_max(&it),
                    soc_slack: e.a - (e.a * e.a - e.q).sqrt(),
                    stationarity: dec,
                });
            }
            stage_steps += 1;
            if dec / 2.0 <= 1e-9 || stage_steps > 50 {
                break;
            }
            let phi = sv.barrier(tau, &it, &e);
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                let trial = Iterate {
                    x: it.x.iter().zip(dx.iter()).map(|(x, d)| x + d * step).collect(),
                    t: it.t + dt * step,
                };
                if let Some(te) = sv.eval(&trial) {
                    if sv.barrier(tau, &trial, &te) <= phi - 0.25 * step * dec {
                        accepted = Some((trial, te));
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, te)) => {
                    let stalled = phi - sv.barrier(tau, &trial, &te) <= 1e-13 * (1.0 + phi.abs());
                    it = trial;
                    e = te;
                    if stalled {
                        break;
                    }
                }
                None => break,
            }
        }
        let gap = m / tau;
        let pm = p_max(&it);
        if let Some(b) = budget {
            if pm <= b {
                return Ok(Run { outcome: Outcome::Feasible(it), newton, trace });
            }
            if it.t - 2.0 * gap > b {
                return Ok(Run { outcome: Outcome::Infeasible, newton, trace });
            }
        }
        if gap <= opts.tol * it.t {
            if let Some(b) = budget {
                let outcome = if pm <= b * (1.0 + 2.0 * opts.tol) {
                    Outcome::Feasible(it)
                } else {
                    Outcome::Infeasible
                };
                return Ok(Run { outcome, newton, trace });
            }
            return Ok(Run { outcome: Outcome::Solved(it), newton, trace });
        }
        tau *= 10.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rician, SystemConfig};

    /// Dense Newton system for comparison with the structured solve.
    fn dense_step(sv: &Solver, tau: f64, it: &Iterate, e: &Eval) -> (DVector<f64>, DVector<f64>) {
        let k_total = sv.pr.devices;
        let nk = sv.pr.chat[0].len();
        let n = nk * k_total + 1;
        let a2 = sv.alpha * sv.alpha;
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        let mut gradq = DVector::zeros(n - 1);
        let mut chat = DVector::zeros(n - 1);
        for k in 0..k_total {
            let r = k * nk;
            let gq = &sv.pr.chat[k] * (2.0 * e.a) - &e.gx[k] * (2.0 * a2);
            gradq.rows_mut(r, nk).copy_from(&gq);
            chat.rows_mut(r, nk).copy_from(&sv.pr.chat[k]);
            h.view_mut((r, r), (nk, nk)).copy_from(&(&sv.pr.ghat[k] * (2.0 * a2 / e.q)));
        }
        // barrier of the cone constraint
        let hq = -&chat * chat.transpose() * (2.0 / e.q) + &gradq * gradq.transpose() / (e.q * e.q);
        let mut top = h.view_mut((0, 0), (n - 1, n - 1));
        top += hq;
        for i in 0..n - 1 {
            g[i] = -gradq[i] / e.q;
        }
        g[n - 1] = tau;
        for k in 0..k_total {
            let r = k * nk;
            let sk = e.s[k];
            let mut ds = DVector::zeros(n);
            ds.rows_mut(r, nk).copy_from(&(&it.x[k] * -2.0));
            ds[n - 1] = 1.0;
            g -= &ds / sk;
            h += &ds * ds.transpose() / (sk * sk);
            for i in 0..nk {
                h[(r + i, r + i)] += 2.0 / sk;
            }
        }
        let step = h.cholesky().unwrap().solve(&(-&g));
        (step, g)
    }

    #[test]
    fn structured_newton_matches_dense() {
        let cfg = SystemConfig { devices: 3, antennas: 3, ..Default::default() };
        let ch = sample_rician(&cfg, 5).unwrap();
        let pr = Prepared::new(&ch).unwrap();
        let sv = Solver { pr: &pr, alpha: 0.6 * pr.alpha_sup(), ksig: 3.0 };
        let mut it = sv.start();
        it.x[1] *= 0.9;
        it.x[0][2] += 0.01;
        let e = sv.eval(&it).unwrap();
        let (dx, dt, _) = sv.newton(2.0, &it, &e).unwrap();
        let (dense, _) = dense_step(&sv, 2.0, &it, &e);
        let nk = pr.chat[0].len();
        for k in 0..3 {
            let d = dense.rows(k * nk, nk);
            assert!((&dx[k] - d).norm() <= 1e-8 * (1.0 + d.norm()), "device {k}");
        }
        assert!((dt - dense[dense.len() - 1]).abs() <= 1e-8 * (1.0 + dt.abs()));
    }
}
