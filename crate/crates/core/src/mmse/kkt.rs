//! Optimality diagnostics for the min-power subproblem.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, inner, norm2, realify, CMat, CVec, COND_LIMIT};

/// Residuals of the first-order conditions at a candidate point.
#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    /// Per device, relative to the column-sum norm.
    pub stationarity_residual: Vec<f64>,
    /// Devices within 1e-4 relative of the largest power.
    pub full_power_devices: Vec<usize>,
    /// Largest `|v_k (|p_k|^2 - p_max)|`.
    pub complementary_slackness: f64,
    /// Recovered regularizers of the centroid form.
    pub mu: Vec<f64>,
    /// Power-constraint multipliers, summing to one.
    pub multipliers: Vec<f64>,
    /// Multiplier of the cone constraint.
    pub lambda: f64,
    /// `(A - alpha S) / A`; negative when the cone constraint is violated.
    pub soc_slack: f64,
}

/// Recover multipliers from stationarity and report what is left over.
pub fn kkt_residuals(ch: &ChannelSet, beams: &[CVec], alpha: f64, sigma2: f64) -> KktReport {
    let k_total = ch.devices();
    let mut a = 0.0;
    let mut q = 0.0;
    let mut gp = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let mut g = CVec::zeros(ch.antennas());
        for l in ch.peers(k) {
            let h = ch.link(k, l);
            let hp = inner(h, &beams[k]);
            a += hp.re;
            q += hp.norm_sqr();
            g += h * hp;
        }
        gp.push(g);
    }
    let s = (k_total as f64 * sigma2 + q).sqrt();
    let powers: Vec<f64> = beams.iter().map(norm2).collect();
    let p_max = powers.iter().copied().fold(0.0, f64::max);

    let mut omega = Vec::with_capacity(k_total);
    let mut resid = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let x = realify(&beams[k]);
        let c = realify(&ch.column_sum(k));
        let ak = realify(&gp[k]) * (alpha / s) - &c;
        let xx = x.norm_squared();
        let w = if xx > 0.0 { (-ak.dot(&x) / (2.0 * xx)).max(0.0) } else { 0.0 };
        let r = &ak + &x * (2.0 * w);
        let cn = c.norm();
        resid.push(if cn > 0.0 { r.norm() / cn } else { r.norm() });
        omega.push(w);
    }
    let total: f64 = omega.iter().sum();
    let lambda = if total > 0.0 { 1.0 / total } else { f64::INFINITY };
    let multipliers: Vec<f64> =
        omega.iter().map(|w| if total > 0.0 { w / total } else { 0.0 }).collect();
    let mu: Vec<f64> = omega.iter().map(|w| 2.0 * w * s / alpha).collect();
    let complementary_slackness = multipliers
        .iter()
        .zip(powers.iter())
        .map(|(v, p)| (v * (p - p_max)).abs())
        .fold(0.0, f64::max);
    let full_power_devices =
        (0..k_total).filter(|&k| powers[k] >= p_max * (1.0 - 1e-4)).collect();
    KktReport {
        stationarity_residual: resid,
        full_power_devices,
        complementary_slackness,
        mu,
        multipliers,
        lambda,
        soc_slack: if a > 0.0 { (a - alpha * s) / a } else { f64::NEG_INFINITY },
    }
}

/// Which closed form of the centroid direction to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CentroidMode {
    /// `(Hᴴ)^{-1} 1`, square channels only.
    Partial,
    /// `(H Hᴴ + mu I)^{-1} H 1`.
    Full,
}

/// Unit-norm centroid beam direction.
pub fn centroid_direction(hk: &CMat, mode: CentroidMode, mu: f64) -> Result<CVec> {
    let n = hk.ncols();
    let ones = CVec::from_element(n, Complex64::new(1.0, 0.0));
    let v = match mode {
        CentroidMode::Partial => {
            if hk.nrows() != n {
                return Err(Error::Dimension(format!(
                    "partial-power form needs a square channel, got {}x{n}",
                    hk.nrows()
                )));
            }
            let cond = condition_number(&(hk.adjoint() * hk));
            if cond > COND_LIMIT {
                return Err(Error::SingularChannel { device: 0, cond });
            }
            hk.adjoint()
                .lu()
                .solve(&ones)
                .ok_or(Error::SingularChannel { device: 0, cond })?
        }
        CentroidMode::Full => {
            if !(mu >= 0.0) {
                return Err(Error::Data(format!("mu must be non-negative, got {mu}")));
            }
            let mut g = hk * hk.adjoint();
            g += DMatrix::<Complex64>::identity(g.nrows(), g.ncols()) * Complex64::new(mu, 0.0);
            let cond = condition_number(&g);
            if cond > COND_LIMIT {
                return Err(Error::SingularChannel { device: 0, cond });
            }
            let rhs = hk * ones;
            g.cholesky().ok_or(Error::SingularChannel { device: 0, cond })?.solve(&rhs)
        }
    };
    let nrm = v.norm();
    Ok(v / Complex64::new(nrm, 0.0))
}

/// `Re(aᴴ b) / (|a| |b|)`.
pub fn cosine(a: &CVec, b: &CVec) -> f64 {
    inner(a, b).re / (a.norm() * b.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rician, SystemConfig};

    #[test]
    fn identity_directions() {
        let h = CMat::identity(3, 3);
        let expect = CVec::from_element(3, Complex64::new(1.0 / 3f64.sqrt(), 0.0));
        for mode in [CentroidMode::Partial, CentroidMode::Full] {
            let d = centroid_direction(&h, mode, 0.5).unwrap();
            assert!((d - &expect).norm() < 1e-12);
        }
    }

    #[test]
    fn full_at_zero_mu_equals_partial() {
        let cfg = SystemConfig { devices: 4, antennas: 3, ..Default::default() };
        let ch = sample_rician(&cfg, 3).unwrap();
        let h = ch.device_matrix(1).unwrap();
        let a = centroid_direction(&h, CentroidMode::Partial, 0.0).unwrap();
        let b = centroid_direction(&h, CentroidMode::Full, 0.0).unwrap();
        assert!(cosine(&a, &b) > 1.0 - 1e-10);
    }

    #[test]
    fn scalar_optimum_has_zero_residual() {
        let ch = ChannelSet::constant(2, &[Complex64::new(1.0, 0.0)], 0).unwrap();
        let p = vec![CVec::from_element(1, Complex64::new(1.0, 0.0)); 2];
        let r = kkt_residuals(&ch, &p, 1.0, 1.0);
        assert!(r.stationarity_residual.iter().all(|&x| x < 1e-12));
        assert!((r.lambda - 2.0).abs() < 1e-12);
        assert_eq!(r.full_power_devices, vec![0, 1]);
        assert!(r.soc_slack.abs() < 1e-12);
    }
}
