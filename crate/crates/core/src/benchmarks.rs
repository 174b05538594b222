//! Baseline transports and the per-round latency model.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{guarded_solve, inner, norm2, CMat, CVec};
use crate::signal::{denormalize, draw_noise, mean_and_se, peer_averages, NormalizationStats};

/// Beamformers for one receive slot of single-aggregation AirComp.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotDesign {
    pub receiver: usize,
    /// Beamformer of every device; the receiver's own entry is zero.
    pub beams: Vec<CVec>,
    /// Common aligned gain squared.
    pub eta: f64,
}

/// Matched-direction beams with channel inversion toward one receiver.
///
/// Every transmitter points along its channel to the receiver and scales
/// its power so that all aligned gains equal `sqrt(eta)`, where `eta` is set
/// by the weakest link at full power.
pub fn single_agg_design(ch: &ChannelSet, p0: f64, receiver: usize) -> Result<SlotDesign> {
    let k_total = ch.devices();
    if receiver >= k_total {
        return Err(Error::Index { index: receiver, len: k_total });
    }
    let mut eta = f64::INFINITY;
    for k in ch.peers(receiver) {
        let g = norm2(ch.link(k, receiver));
        if g == 0.0 {
            return Err(Error::ZeroChannel { from: k, to: receiver });
        }
        eta = eta.min(p0 * g);
    }
    let beams = (0..k_total)
        .map(|k| {
            if k == receiver {
                return CVec::zeros(ch.antennas());
            }
            let h = ch.link(k, receiver);
            h * Complex64::new(eta.sqrt() / norm2(h), 0.0)
        })
        .collect();
    Ok(SlotDesign { receiver, beams, eta })
}

/// Sum error of one full single-aggregation round (all K slots).
pub fn single_agg_mse(ch: &ChannelSet, p0: f64, sigma2: f64, v: f64, d: usize) -> Result<f64> {
    let k = ch.devices() as f64;
    let mut total = 0.0;
    for l in 0..ch.devices() {
        let slot = single_agg_design(ch, p0, l)?;
        let mut mis = 0.0;
        for kk in ch.peers(l) {
            let g = inner(ch.link(kk, l), &slot.beams[kk]) / slot.eta.sqrt();
            mis += (g - 1.0).norm_sqr();
        }
        total += v * v * d as f64 / ((k - 1.0) * (k - 1.0)) * (mis + sigma2 / slot.eta);
    }
    Ok(total)
}

fn single_agg_complex<R: Rng>(
    ch: &ChannelSet,
    p0: f64,
    s: &[DVector<f64>],
    stats: NormalizationStats,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<CVec>> {
    let k_total = ch.devices();
    if s.len() != k_total {
        return Err(Error::Dimension(format!("{} symbol vectors for {k_total} devices", s.len())));
    }
    let d = s[0].len();
    (0..k_total)
        .map(|l| {
            let slot = single_agg_design(ch, p0, l)?;
            let noise = draw_noise(k_total, d, sigma2, stats.std, slot.eta, rng).swap_remove(l);
            let scale = stats.std / ((k_total as f64 - 1.0) * slot.eta.sqrt());
            let mut r = noise.map(|c| c + stats.mean);
            for k in ch.peers(l) {
                let g = inner(ch.link(k, l), &slot.beams[k]) * scale;
                for (ri, si) in r.iter_mut().zip(s[k].iter()) {
                    *ri += g * *si;
                }
            }
            Ok(r)
        })
        .collect()
}

/// One single-aggregation round: every device receives in its own slot.
pub fn single_agg_round<R: Rng>(
    ch: &ChannelSet,
    p0: f64,
    s: &[DVector<f64>],
    stats: NormalizationStats,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    Ok(single_agg_complex(ch, p0, s, stats, sigma2, rng)?.iter().map(|v| v.map(|c| c.re)).collect())
}

/// Monte Carlo counterpart of [`single_agg_mse`], on the complex aggregate.
pub fn single_agg_empirical_mse<R: Rng>(
    ch: &ChannelSet,
    p0: f64,
    stats: NormalizationStats,
    sigma2: f64,
    d: usize,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::Data(format!("need at least 2 trials, got {trials}")));
    }
    let k_total = ch.devices();
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let s: Vec<DVector<f64>> =
            (0..k_total).map(|_| DVector::from_fn(d, |_, _| rng.sample(StandardNormal))).collect();
        let r = single_agg_complex(ch, p0, &s, stats, sigma2, rng)?;
        let truth = peer_averages(&s.iter().map(|v| denormalize(v, stats)).collect::<Vec<_>>());
        let err: f64 = r
            .iter()
            .zip(&truth)
            .map(|(rk, tk)| rk.iter().zip(tk.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
            .sum();
        samples.push(err);
    }
    Ok(mean_and_se(&samples))
}

/// Uniform `bits`-bit quantization over the joint range of all entries.
pub fn quantize(z: &[DVector<f64>], bits: u32) -> Vec<DVector<f64>> {
    let lo = z.iter().flat_map(|v| v.iter()).copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().flat_map(|v| v.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return z.to_vec();
    }
    let levels = 2f64.powi(bits.min(62) as i32) - 1.0;
    let step = (hi - lo) / levels;
    z.iter()
        .map(|v| v.map(|x| (lo + ((x - lo) / step).round() * step).clamp(lo, hi)))
        .collect()
}

/// Exact peer averages of the quantized states.
pub fn digital_aggregate(z: &[DVector<f64>], bits: u32) -> Vec<DVector<f64>> {
    peer_averages(&quantize(z, bits))
}

/// Communication scheme for latency accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CommScheme {
    DistributedAirComp,
    SingleAggregation,
    Digital,
}

impl CommScheme {
    pub fn name(self) -> &'static str {
        match self {
            CommScheme::DistributedAirComp => "aircomp",
            CommScheme::SingleAggregation => "single_agg",
            CommScheme::Digital => "digital",
        }
    }
}

/// Parameters of the per-round latency model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyModel {
    pub scheme: CommScheme,
    pub dim: usize,
    pub bandwidth_hz: f64,
    pub devices: usize,
    /// Bits per coefficient for digital transmission.
    pub bits: u32,
    pub max_power: f64,
    pub noise_var: f64,
}

impl LatencyModel {
    pub fn from_config(scheme: CommScheme, cfg: &crate::channel::SystemConfig) -> Self {
        LatencyModel {
            scheme,
            dim: cfg.dim,
            bandwidth_hz: cfg.bandwidth_hz,
            devices: cfg.devices,
            bits: 16,
            max_power: cfg.max_power,
            noise_var: cfg.noise_var,
        }
    }
}

/// Time to push `dim * bits` bits at capacity with effective SNR `snr`.
pub fn digital_slot_latency(dim: usize, bits: u32, bandwidth_hz: f64, snr: f64) -> f64 {
    dim as f64 * bits as f64 / (bandwidth_hz * (1.0 + snr).log2())
}

/// Effective unicast gains `|h_{kl}ᴴ w_{kl}|^2` with normalized ZF columns.
pub fn zf_unicast_gains(hk: &CMat, device: usize) -> Result<Vec<f64>> {
    let gram = hk.adjoint() * hk;
    let eye = CMat::identity(hk.ncols(), hk.ncols());
    let w = hk * guarded_solve(&gram, &eye, device)?;
    Ok((0..hk.ncols())
        .map(|j| {
            let col = w.column(j).into_owned();
            let h = hk.column(j).into_owned();
            inner(&h, &col).norm_sqr() / norm2(&col)
        })
        .collect())
}

/// Seconds needed for one round of the given scheme.
pub fn round_latency(model: &LatencyModel, ch: Option<&ChannelSet>) -> Result<f64> {
    let slot = model.dim as f64 / model.bandwidth_hz;
    match model.scheme {
        CommScheme::DistributedAirComp => Ok(slot),
        CommScheme::SingleAggregation => Ok(model.devices as f64 * slot),
        CommScheme::Digital => {
            let ch = ch.ok_or_else(|| Error::Config("digital latency needs channels".into()))?;
            let mut total = 0.0;
            for k in 0..ch.devices() {
                let gains = zf_unicast_gains(&ch.device_matrix(k)?, k)?;
                let worst = gains
                    .iter()
                    .map(|g| {
                        digital_slot_latency(
                            model.dim,
                            model.bits,
                            model.bandwidth_hz,
                            model.max_power * g / model.noise_var,
                        )
                    })
                    .fold(0.0, f64::max);
                total += worst;
            }
            Ok(total)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rician, SystemConfig};
    use crate::rng::{substream, Domain};
    use crate::signal::normalize;

    #[test]
    fn equal_gains_give_exact_average() {
        let ch = ChannelSet::from_fn(3, 2, 0, |k, l| {
            CVec::from_vec(vec![Complex64::from_polar(0.6, (k + l) as f64), Complex64::new(0.8, 0.0)])
        })
        .unwrap();
        let z: Vec<DVector<f64>> = (0..3).map(|k| DVector::from_vec(vec![k as f64, 1.0 - k as f64])).collect();
        let stats = crate::signal::compute_stats(&z).unwrap();
        let s: Vec<_> = z.iter().map(|v| normalize(v, stats)).collect();
        let mut rng = substream(0, Domain::Noise, 0, 0);
        let r = single_agg_round(&ch, 1.0, &s, stats, 0.0, &mut rng).unwrap();
        for (rk, tk) in r.iter().zip(peer_averages(&z).iter()) {
            assert!((rk - tk).norm() < 1e-12);
        }
    }

    #[test]
    fn two_device_slot() {
        let ch = ChannelSet::constant(2, &[Complex64::new(0.0, 1.0)], 0).unwrap();
        let slot = single_agg_design(&ch, 2.0, 0).unwrap();
        assert!((slot.eta - 2.0).abs() < 1e-12);
        let mse = single_agg_mse(&ch, 2.0, 0.5, 1.0, 3).unwrap();
        assert!((mse - 2.0 * 3.0 * 0.5 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantization_error_and_limits() {
        let z = vec![DVector::from_vec(vec![-1.0, 0.3, 0.77]), DVector::from_vec(vec![1.0, -0.123_456_7, 0.5])];
        let q = quantize(&z, 16);
        for (a, b) in z.iter().zip(q.iter()) {
            assert!((a - b).amax() <= 2.0 / 65536.0);
        }
        let exact = peer_averages(&z);
        for (a, b) in digital_aggregate(&z, 52).iter().zip(exact.iter()) {
            assert!((a - b).amax() <= 1e-12);
        }
        let c = vec![DVector::from_element(2, 0.3); 3];
        assert_eq!(quantize(&c, 4), c);
    }

    #[test]
    fn latency_arithmetic() {
        let cfg = SystemConfig { devices: 10, antennas: 9, dim: 1000, bandwidth_hz: 1e6, ..Default::default() };
        let air = LatencyModel::from_config(CommScheme::DistributedAirComp, &cfg);
        assert!((round_latency(&air, None).unwrap() - 1e-3).abs() < 1e-15);
        let single = LatencyModel { scheme: CommScheme::SingleAggregation, ..air };
        assert!((round_latency(&single, None).unwrap() - 1e-2).abs() < 1e-15);
        assert!((digital_slot_latency(1000, 16, 1e6, 1.0) - 0.016).abs() < 1e-15);
        let dig = LatencyModel { scheme: CommScheme::Digital, ..air };
        assert!(round_latency(&dig, None).is_err());
        let ch = sample_rician(&cfg, 0).unwrap();
        assert!(round_latency(&dig, Some(&ch)).unwrap() > round_latency(&single, None).unwrap());
    }
}
