//! Exhaustive grid oracle for tiny instances.
//!
//! Each device is described by its aligned gain `A_k = Re(c_kᴴ p_k)` on a
//! uniform grid over `[0, |c_k| sqrt(P0)]`. For a given gain the least
//! interference `p_kᴴ G_k p_k` under the power budget has the form
//! `gamma (G_k + mu I)^{-1} c_k`, found by a scalar search on `mu`. The grid
//! over all devices is then scanned for the largest aligned fraction.

use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{inner, CVec};
use crate::signal::{BeamformingSolution, Diagnostics, Scheme};

use super::barrier::Prepared;
use super::conditional_eta;

struct Device<'a> {
    lam: Vec<f64>,
    w: Vec<f64>,
    coef: Vec<Complex64>,
    basis: &'a crate::linalg::CMat,
    c: &'a CVec,
    cn2: f64,
}

impl<'a> Device<'a> {
    fn sums(&self, mu: f64) -> (f64, f64, f64) {
        let mut f1 = 0.0;
        let mut f2 = 0.0;
        let mut f3 = 0.0;
        for (&l, &w) in self.lam.iter().zip(self.w.iter()) {
            let d = l + mu;
            f1 += w / d;
            f2 += w / (d * d);
            f3 += l * w / (d * d);
        }
        (f1, f2, f3)
    }

    /// Least interference and the beam reaching aligned gain `a`.
    fn best(&self, a: f64, p0: f64) -> (f64, CVec) {
        let nt = self.c.len();
        if a <= 0.0 || self.cn2 == 0.0 {
            return (0.0, CVec::zeros(nt));
        }
        let a_max = (self.cn2 * p0).sqrt();
        if a >= a_max * (1.0 - 1e-12) {
            let p = self.c * Complex64::new(a / self.cn2, 0.0);
            let gp: f64 = self
                .lam
                .iter()
                .zip(self.w.iter())
                .map(|(l, w)| l * w)
                .sum::<f64>()
                * (a / self.cn2).powi(2);
            return (gp, p);
        }
        let power = |mu: f64| {
            let (f1, f2, _) = self.sums(mu);
            a * a * f2 / (f1 * f1)
        };
        let mu = if self.lam.iter().all(|&l| l > 0.0) && power(0.0) <= p0 {
            0.0
        } else {
            let mut hi = self.lam.iter().copied().fold(1e-12, f64::max);
            while power(hi) > p0 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if power(mid) > p0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            hi
        };
        let (f1, _, f3) = self.sums(mu);
        let gamma = a / f1;
        let mut p = CVec::zeros(nt);
        for ((&l, coef), col) in self.lam.iter().zip(self.coef.iter()).zip(self.basis.column_iter()) {
            p += col * (*coef * (gamma / (l + mu)));
        }
        (gamma * gamma * f3, p)
    }
}

/// Grid minimizer of the sum error for `K <= 3`, `Nt <= 2`.
pub fn brute_force_mmse(ch: &ChannelSet, p0: f64, sigma2: f64, grid_resolution: f64) -> Result<BeamformingSolution> {
    let k_total = ch.devices();
    if k_total > 3 || ch.antennas() > 2 {
        return Err(Error::InstanceTooLarge { devices: k_total, antennas: ch.antennas() });
    }
    if !(grid_resolution > 0.0 && grid_resolution <= 1.0) {
        return Err(Error::Config(format!("grid resolution must be in (0, 1], got {grid_resolution}")));
    }
    let pr = Prepared::new(ch)?;
    let steps = (1.0 / grid_resolution).round() as usize;
    let devices: Vec<Device> = (0..k_total)
        .map(|k| {
            let (lam, basis) = &pr.eig[k];
            let c = &pr.c[k];
            let coef: Vec<Complex64> = basis.column_iter().map(|u| inner(&u.into_owned(), c)).collect();
            let total: f64 = coef.iter().map(|z| z.norm_sqr()).sum();
            let keep: Vec<usize> = (0..coef.len()).filter(|&i| coef[i].norm_sqr() > 1e-30 * total).collect();
            Device {
                lam: keep.iter().map(|&i| lam[i].max(0.0)).collect(),
                w: keep.iter().map(|&i| coef[i].norm_sqr()).collect(),
                coef: (0..coef.len()).map(|i| if keep.contains(&i) { coef[i] } else { Complex64::new(0.0, 0.0) }).collect(),
                basis,
                c,
                cn2: total,
            }
        })
        .collect();

    // per-device frontier over the grid
    let frontier: Vec<(Vec<f64>, Vec<f64>)> = devices
        .iter()
        .map(|d| {
            let a_max = (d.cn2 * p0).sqrt();
            let gains: Vec<f64> = (0..=steps).map(|i| a_max * (i as f64 / steps as f64)).collect();
            let qs = gains.iter().map(|&a| d.best(a, p0).0).collect();
            (gains, qs)
        })
        .collect();

    let ksig = k_total as f64 * sigma2;
    let mut best = (0.0f64, 1.0f64, vec![0usize; k_total]);
    // compare a^2/s against the incumbent without dividing
    fn consider(best: &mut (f64, f64, Vec<usize>), a: f64, s: f64, idx: &[usize]) {
        if a > 0.0 && a * a * best.1 > best.0 * best.0 * s {
            *best = (a, s, idx.to_vec());
        }
    }
    let (g0, q0) = &frontier[0];
    let (g1, q1) = &frontier[1];
    if k_total == 2 {
        for i in 0..=steps {
            for j in 0..=steps {
                consider(&mut best, g0[i] + g1[j], ksig + q0[i] + q1[j], &[i, j]);
            }
        }
    } else {
        let (g2, q2) = &frontier[2];
        for i in 0..=steps {
            for j in 0..=steps {
                let a = g0[i] + g1[j];
                let s = ksig + q0[i] + q1[j];
                // branch-free scan of the last device; argmax only on improvement
                let top = g2
                    .iter()
                    .zip(q2.iter())
                    .map(|(gm, qm)| {
                        let am = a + gm;
                        am * am / (s + qm)
                    })
                    .fold(0.0f64, f64::max);
                if top * best.1 > best.0 * best.0 {
                    for m in 0..=steps {
                        let am = a + g2[m];
                        let sm = s + q2[m];
                        if am * am / sm == top {
                            consider(&mut best, am, sm, &[i, j, m]);
                            break;
                        }
                    }
                }
            }
        }
    }
    if best.0 <= 0.0 {
        return Err(Error::DegenerateBeamformer);
    }
    let beams: Vec<CVec> = best
        .2
        .iter()
        .zip(devices.iter().zip(frontier.iter()))
        .map(|(&i, (d, (g, _)))| d.best(g[i], p0).1)
        .collect();
    let eta = conditional_eta(ch, &beams, sigma2)?;
    let alpha = best.0 / best.1.sqrt();
    Ok(BeamformingSolution {
        scheme: Scheme::Mmse,
        beams,
        eta,
        alpha: Some(alpha),
        diagnostics: Diagnostics { iterations: (steps + 1).pow(k_total as u32), ..Default::default() },
    })
}
