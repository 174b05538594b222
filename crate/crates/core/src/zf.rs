//! Zero-forcing multicast beamforming.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{guarded_solve, min_eigenvalue, norm2, CMat, CVec};
use crate::signal::{BeamformingSolution, Diagnostics, Scheme};

fn ones(n: usize) -> CMat {
    CMat::from_element(n, 1, Complex64::new(1.0, 0.0))
}

/// `(Hᴴ H)^{-1} 1` for one device, with the condition guard.
fn gram_inverse_ones(hk: &CMat, device: usize) -> Result<CVec> {
    let gram = hk.adjoint() * hk;
    let x = guarded_solve(&gram, &ones(hk.ncols()), device)?;
    Ok(x.column(0).into_owned())
}

fn zf_direction(hk: &CMat, device: usize) -> Result<(CVec, f64)> {
    let w = gram_inverse_ones(hk, device)?;
    let quad: f64 = w.iter().map(|c| c.re).sum();
    Ok((hk * w, quad))
}

/// Minimum-norm beamformer with `Hkᴴ p = sqrt(eta) 1`.
pub fn zf_beamformer(hk: &CMat, eta: f64) -> Result<CVec> {
    zf_beamformer_for(hk, eta, 0)
}

fn zf_beamformer_for(hk: &CMat, eta: f64, device: usize) -> Result<CVec> {
    if hk.ncols() > hk.nrows() {
        return Err(Error::SingularChannel { device, cond: f64::INFINITY });
    }
    let (dir, _) = zf_direction(hk, device)?;
    let mut p = dir * Complex64::new(eta.sqrt(), 0.0);
    // refine the alignment residual once more
    let target = ones(hk.ncols()) * Complex64::new(eta.sqrt(), 0.0);
    let resid = &target - hk.adjoint() * &p;
    let gram = hk.adjoint() * hk;
    let resid = CMat::from_column_slice(resid.len(), 1, resid.as_slice());
    let corr = guarded_solve(&gram, &resid, device)?;
    p += hk * corr.column(0);
    Ok(p)
}

/// Largest common alignment factor meeting every power budget, and the
/// device that attains it (smallest index on ties).
pub fn zf_alignment(ch: &ChannelSet, p0: f64) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 0);
    for k in 0..ch.devices() {
        let hk = ch.device_matrix(k)?;
        if hk.ncols() > hk.nrows() {
            return Err(Error::SingularChannel { device: k, cond: f64::INFINITY });
        }
        let w = gram_inverse_ones(&hk, k)?;
        let quad: f64 = w.iter().map(|c| c.re).sum();
        let eta = p0 / quad;
        if eta < best.0 {
            best = (eta, k);
        }
    }
    Ok(best)
}

pub fn zf_alignment_factor(ch: &ChannelSet, p0: f64) -> Result<f64> {
    zf_alignment(ch, p0).map(|(eta, _)| eta)
}

pub fn zf_design(ch: &ChannelSet, p0: f64) -> Result<BeamformingSolution> {
    let (eta, binding) = zf_alignment(ch, p0)?;
    let mut beams = Vec::with_capacity(ch.devices());
    let mut residual: f64 = 0.0;
    for k in 0..ch.devices() {
        let hk = ch.device_matrix(k)?;
        let mut p = zf_beamformer_for(&hk, eta, k)?;
        // clip round-off above the budget
        let pw = norm2(&p);
        if pw > p0 {
            p *= Complex64::new((p0 / pw).sqrt(), 0.0);
            while norm2(&p) > p0 {
                p *= Complex64::new(1.0 - f64::EPSILON, 0.0);
            }
        }
        let r = hk.adjoint() * &p - ones(hk.ncols()).column(0) * Complex64::new(eta.sqrt(), 0.0);
        residual = residual.max(r.norm());
        beams.push(p);
    }
    Ok(BeamformingSolution {
        scheme: Scheme::Zf,
        beams,
        eta,
        alpha: None,
        diagnostics: Diagnostics { residual, binding_device: Some(binding), ..Default::default() },
    })
}

/// Rayleigh-quotient bound on the ZF sum error.
pub fn zf_mse_upper_bound(ch: &ChannelSet, p0: f64, sigma2: f64, v: f64, d: usize) -> Result<f64> {
    let k = ch.devices() as f64;
    let mut lam = f64::INFINITY;
    for dev in 0..ch.devices() {
        let hk = ch.device_matrix(dev)?;
        let gram = hk.adjoint() * &hk;
        let m = min_eigenvalue(&gram);
        if !(m > 0.0) || crate::linalg::condition_number(&gram) > crate::linalg::COND_LIMIT {
            return Err(Error::SingularChannel { device: dev, cond: f64::INFINITY });
        }
        lam = lam.min(m);
    }
    Ok(k * d as f64 * v * v * sigma2 / ((k - 1.0) * p0 * lam))
}

/// Smallest eigenvalue of `H_kᴴ H_k` for every device.
pub fn gram_min_eigenvalues(ch: &ChannelSet) -> Result<Vec<f64>> {
    (0..ch.devices())
        .map(|k| {
            let hk = ch.device_matrix(k)?;
            Ok(min_eigenvalue(&(hk.adjoint() * &hk)))
        })
        .collect()
}

/// Column-sum ("centroid") form `sqrt(eta) sum_l [H (HᴴH)^{-1}]_l`.
pub fn zf_centroid(hk: &CMat, eta: f64) -> Result<CVec> {
    let gram = hk.adjoint() * hk;
    let eye = DMatrix::<Complex64>::identity(hk.ncols(), hk.ncols());
    let inv = guarded_solve(&gram, &eye, 0)?;
    let pinv = hk * inv;
    let mut out = CVec::zeros(hk.nrows());
    for col in pinv.column_iter() {
        out += col;
    }
    Ok(out * Complex64::new(eta.sqrt(), 0.0))
}
