//! The per-round analog aggregation chain: normalization, over-the-air
//! superposition, de-normalization and the resulting error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm2, CVec};

/// Floor applied to the round spread.
pub const V_FLOOR: f64 = 1e-12;

/// Round mean and spread used by the normalizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
}

/// Which design produced a set of beamformers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Zf,
    Mmse,
    SingleAgg,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Zf => "zf",
            Scheme::Mmse => "mmse",
            Scheme::SingleAgg => "single_agg",
        }
    }
}

/// Solver metadata attached to a design.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual: f64,
    /// Device whose power budget fixes the alignment factor.
    pub binding_device: Option<usize>,
    /// Set when the outer bracket could not be established.
    pub bracket_failed: bool,
}

/// Per-device beamformers plus the common alignment factor.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformingSolution {
    pub scheme: Scheme,
    pub beams: Vec<CVec>,
    pub eta: f64,
    /// Aligned fraction reached by the MMSE design.
    pub alpha: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl BeamformingSolution {
    pub fn new(scheme: Scheme, beams: Vec<CVec>, eta: f64) -> Self {
        BeamformingSolution { scheme, beams, eta, alpha: None, diagnostics: Diagnostics::default() }
    }

    pub fn powers(&self) -> Vec<f64> {
        self.beams.iter().map(norm2).collect()
    }

    pub fn max_power(&self) -> f64 {
        self.powers().into_iter().fold(0.0, f64::max)
    }

    /// Aligned gain `h_{kl}^H p_k / sqrt(eta)`.
    pub fn gain(&self, ch: &ChannelSet, k: usize, l: usize) -> Complex64 {
        inner(ch.link(k, l), &self.beams[k]) / self.eta.sqrt()
    }

    fn check(&self, ch: &ChannelSet) -> Result<()> {
        if self.beams.len() != ch.devices() {
            return Err(Error::Dimension(format!(
                "{} beamformers for {} devices",
                self.beams.len(),
                ch.devices()
            )));
        }
        if let Some(p) = self.beams.iter().find(|p| p.len() != ch.antennas()) {
            return Err(Error::Dimension(format!(
                "beamformer length {} for {} antennas",
                p.len(),
                ch.antennas()
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Data(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Analytic and empirical error summary for one design.
#[derive(Clone, Debug)]
pub struct AggregationReport {
    pub mse_analytic: f64,
    /// Estimate and its standard error.
    pub mse_empirical: Option<(f64, f64)>,
    /// Row `k` holds `|h_{kl}^H p_k / sqrt(eta) - 1|^2` over `l != k` ascending.
    pub misalignment: DMatrix<f64>,
}

/// Mean and floored standard deviation over every entry of every vector.
pub fn compute_stats(z: &[DVector<f64>]) -> Result<NormalizationStats> {
    let n: usize = z.iter().map(|v| v.len()).sum();
    if n == 0 {
        return Err(Error::Data("no entries".into()));
    }
    if z.iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite state entry".into()));
    }
    let mean = z.iter().flat_map(|v| v.iter()).sum::<f64>() / n as f64;
    let var = z.iter().flat_map(|v| v.iter()).map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(NormalizationStats { mean, std: var.sqrt().max(V_FLOOR) })
}

/// Exponentially weighted estimate of the round statistics.
#[derive(Clone, Debug)]
pub struct RunningStats {
    decay: f64,
    mean: Option<f64>,
    second: f64,
}

impl RunningStats {
    /// `decay` is the weight kept on the previous estimate.
    pub fn new(decay: f64) -> Self {
        RunningStats { decay, mean: None, second: 0.0 }
    }

    pub fn update(&mut self, z: &[DVector<f64>]) -> Result<NormalizationStats> {
        let cur = compute_stats(z)?;
        let cur_second = cur.std * cur.std + cur.mean * cur.mean;
        let (mean, second) = match self.mean {
            None => (cur.mean, cur_second),
            Some(m) => (
                self.decay * m + (1.0 - self.decay) * cur.mean,
                self.decay * self.second + (1.0 - self.decay) * cur_second,
            ),
        };
        self.mean = Some(mean);
        self.second = second;
        Ok(NormalizationStats { mean, std: (second - mean * mean).max(0.0).sqrt().max(V_FLOOR) })
    }
}

pub fn normalize(z: &DVector<f64>, stats: NormalizationStats) -> DVector<f64> {
    z.map(|x| (x - stats.mean) / stats.std)
}

pub fn denormalize(s: &DVector<f64>, stats: NormalizationStats) -> DVector<f64> {
    s.map(|x| x * stats.std + stats.mean)
}

/// Misalignment matrix, one row per transmitter.
pub fn misalignment(ch: &ChannelSet, sol: &BeamformingSolution) -> DMatrix<f64> {
    let k_total = ch.devices();
    DMatrix::from_fn(k_total, k_total - 1, |k, j| {
        let l = if j < k { j } else { j + 1 };
        (sol.gain(ch, k, l) - 1.0).norm_sqr()
    })
}

/// Closed-form sum error of one aggregation round.
pub fn analytic_mse(ch: &ChannelSet, sol: &BeamformingSolution, sigma2: f64, v: f64, d: usize) -> f64 {
    let k = ch.devices() as f64;
    let scale = v * v * d as f64 / ((k - 1.0) * (k - 1.0));
    let mis: f64 = misalignment(ch, sol).iter().sum();
    scale * mis + k * scale * sigma2 / sol.eta
}

/// Analytic error plus misalignment breakdown, optionally with a Monte Carlo estimate.
pub fn report<R: Rng>(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    stats: NormalizationStats,
    sigma2: f64,
    d: usize,
    trials: Option<(usize, &mut R)>,
) -> Result<AggregationReport> {
    sol.check(ch)?;
    let mse_empirical = match trials {
        Some((n, rng)) => Some(empirical_mse(ch, sol, stats, sigma2, d, n, rng)?),
        None => None,
    };
    Ok(AggregationReport {
        mse_analytic: analytic_mse(ch, sol, sigma2, stats.std, d),
        mse_empirical,
        misalignment: misalignment(ch, sol),
    })
}

/// Draw the de-normalized receiver noise `w_k` for every device.
pub fn draw_noise<R: Rng>(
    devices: usize,
    d: usize,
    sigma2: f64,
    v: f64,
    eta: f64,
    rng: &mut R,
) -> Vec<CVec> {
    let std = v * (sigma2 / eta).sqrt() / (devices as f64 - 1.0) * std::f64::consts::FRAC_1_SQRT_2;
    (0..devices)
        .map(|_| {
            CVec::from_fn(d, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * std, im * std)
            })
        })
        .collect()
}

fn check_symbols(ch: &ChannelSet, s: &[DVector<f64>], noise: &[CVec]) -> Result<usize> {
    let k = ch.devices();
    if s.len() != k || noise.len() != k {
        return Err(Error::Dimension(format!(
            "{} symbol vectors and {} noise vectors for {k} devices",
            s.len(),
            noise.len()
        )));
    }
    let d = s[0].len();
    if s.iter().any(|v| v.len() != d) || noise.iter().any(|v| v.len() != d) {
        return Err(Error::Dimension("ragged symbol or noise vectors".into()));
    }
    Ok(d)
}

/// Complex received aggregate at every device for given noise draws.
pub fn received_complex(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    s: &[DVector<f64>],
    stats: NormalizationStats,
    noise: &[CVec],
) -> Result<Vec<CVec>> {
    sol.check(ch)?;
    let d = check_symbols(ch, s, noise)?;
    let k_total = ch.devices();
    let scale = stats.std / ((k_total as f64 - 1.0) * sol.eta.sqrt());
    Ok((0..k_total)
        .map(|k| {
            let mut r = CVec::from_element(d, Complex64::new(stats.mean, 0.0)) + &noise[k];
            for l in ch.peers(k) {
                let g = inner(ch.link(l, k), &sol.beams[l]) * scale;
                for (ri, si) in r.iter_mut().zip(s[l].iter()) {
                    *ri += g * *si;
                }
            }
            r
        })
        .collect())
}

/// One over-the-air round. Returns the real part of each de-normalized aggregate.
pub fn simulate_round<R: Rng>(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    s: &[DVector<f64>],
    stats: NormalizationStats,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let d = s.first().map_or(0, |v| v.len());
    let noise = draw_noise(ch.devices(), d, sigma2, stats.std, sol.eta, rng);
    let r = received_complex(ch, sol, s, stats, &noise)?;
    Ok(r.iter().map(|v| v.map(|c| c.re)).collect())
}

/// Exact peer averages `(1/(K-1)) sum_{l != k} z_l`.
pub fn peer_averages(z: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let k = z.len();
    let total = z.iter().skip(1).fold(z[0].clone(), |acc, v| acc + v);
    z.iter().map(|zk| (&total - zk) / (k as f64 - 1.0)).collect()
}

/// Monte Carlo estimate of the sum error and its standard error.
///
/// Symbols are i.i.d. standard normal; the error is measured on the complex
/// aggregate so it is comparable with [`analytic_mse`].
pub fn empirical_mse<R: Rng>(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
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
        let s: Vec<DVector<f64>> = (0..k_total)
            .map(|_| DVector::from_fn(d, |_, _| rng.sample(StandardNormal)))
            .collect();
        let noise = draw_noise(k_total, d, sigma2, stats.std, sol.eta, rng);
        let r = received_complex(ch, sol, &s, stats, &noise)?;
        let z: Vec<DVector<f64>> = s.iter().map(|v| denormalize(v, stats)).collect();
        let truth = peer_averages(&z);
        let err: f64 = r
            .iter()
            .zip(truth.iter())
            .map(|(rk, tk)| rk.iter().zip(tk.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
            .sum();
        samples.push(err);
    }
    Ok(mean_and_se(&samples))
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Distortion in the transmitter-indexed form: device `k`'s own
/// misalignment toward each peer weights that peer's symbols.
pub fn distortion(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    s: &[DVector<f64>],
    v: f64,
    noise: &[CVec],
) -> Result<Vec<CVec>> {
    sol.check(ch)?;
    let d = check_symbols(ch, s, noise)?;
    let k_total = ch.devices();
    let scale = v / (k_total as f64 - 1.0);
    Ok((0..k_total)
        .map(|k| {
            let mut out = noise[k].clone();
            for l in ch.peers(k) {
                let e = (sol.gain(ch, k, l) - 1.0) * scale;
                for i in 0..d {
                    out[i] += e * s[l][i];
                }
            }
            out
        })
        .collect())
}

/// Expected gradient bias in the transmitter-indexed form (real part).
pub fn distortion_bias(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    mean_s: &[DVector<f64>],
    v: f64,
    beta: f64,
) -> Result<Vec<DVector<f64>>> {
    let d = mean_s.first().map_or(0, |m| m.len());
    let zeros = vec![CVec::zeros(d); ch.devices()];
    let delta = distortion(ch, sol, mean_s, v, &zeros)?;
    Ok(delta.iter().map(|dk| dk.map(|c| beta * c.re)).collect())
}

/// Expected gradient bias of the aggregate actually delivered by
/// [`simulate_round`], where receiver `k` sees peer `l` through `h_{lk}`.
pub fn received_bias(
    ch: &ChannelSet,
    sol: &BeamformingSolution,
    mean_s: &[DVector<f64>],
    v: f64,
    beta: f64,
) -> Result<Vec<DVector<f64>>> {
    sol.check(ch)?;
    let k_total = ch.devices();
    if mean_s.len() != k_total {
        return Err(Error::Dimension("one mean vector per device".into()));
    }
    let scale = beta * v / (k_total as f64 - 1.0);
    Ok((0..k_total)
        .map(|k| {
            let mut out = DVector::zeros(mean_s[0].len());
            for l in ch.peers(k) {
                let e = (sol.gain(ch, l, k) - 1.0).re * scale;
                out.axpy(e, &mean_s[l], 1.0);
            }
            out
        })
        .collect())
}
