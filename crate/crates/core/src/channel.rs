//! System parameters and Rician D2D channel realizations.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::rng::{substream, Domain};

/// Radio and problem-size parameters shared by every round.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// Number of devices.
    pub devices: usize,
    /// Transmit antennas per device.
    pub antennas: usize,
    /// State dimension, i.e. symbols per round.
    pub dim: usize,
    /// Per-device transmit power budget in watts.
    pub max_power: f64,
    /// Receiver noise variance.
    pub noise_var: f64,
    pub bandwidth_hz: f64,
    /// Line-of-sight to scatter power ratio.
    pub rician_ratio: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            devices: 5,
            antennas: 8,
            dim: 10,
            max_power: 1.0,
            noise_var: 0.1,
            bandwidth_hz: 1e6,
            rician_ratio: 0.6,
            seed: 0,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "K")]
    devices: usize,
    #[serde(rename = "Nt")]
    antennas: usize,
    #[serde(rename = "D", default = "default_dim")]
    dim: usize,
    #[serde(rename = "P0_dbm")]
    p0_dbm: Option<f64>,
    #[serde(rename = "P0_watt")]
    p0_watt: Option<f64>,
    sigma2: f64,
    #[serde(default = "default_bandwidth")]
    bandwidth_hz: f64,
    #[serde(default = "default_ratio")]
    rician_ratio: f64,
    #[serde(default)]
    seed: u64,
}

fn default_dim() -> usize {
    1
}
fn default_bandwidth() -> f64 {
    1e6
}
fn default_ratio() -> f64 {
    0.6
}

/// Convert dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemConfig {
    /// Check the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.devices < 2 {
            return Err(Error::Config(format!("K must be at least 2, got {}", self.devices)));
        }
        if self.antennas + 1 < self.devices {
            return Err(Error::Config(format!(
                "Nt = {} is below K - 1 = {}",
                self.antennas,
                self.devices - 1
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("D must be at least 1".into()));
        }
        for (name, v) in [
            ("P0", self.max_power),
            ("sigma2", self.noise_var),
            ("bandwidth_hz", self.bandwidth_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.rician_ratio >= 0.0) {
            return Err(Error::Config(format!(
                "rician_ratio must be non-negative, got {}",
                self.rician_ratio
            )));
        }
        Ok(())
    }

    /// Transmit SNR `P0 / sigma2` in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.max_power / self.noise_var).log10()
    }

    /// Copy with the noise variance chosen to hit `snr_db` at the current power.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        SystemConfig {
            noise_var: self.max_power / 10f64.powf(snr_db / 10.0),
            ..self.clone()
        }
    }

    /// Parse from TOML text. Keys may sit at the top level or under `[system]`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let section = match table.get("system") {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => return Err(Error::Config("`system` must be a table".into())),
            None => table,
        };
        Self::from_table(section)
    }

    /// Build from an already-parsed TOML table of system keys.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let raw: RawSystem = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let max_power = match (raw.p0_dbm, raw.p0_watt) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give only one of P0_dbm and P0_watt".into()))
            }
            (Some(dbm), None) => dbm_to_watt(dbm),
            (None, Some(w)) => w,
            (None, None) => return Err(Error::Config("missing P0_dbm or P0_watt".into())),
        };
        let cfg = SystemConfig {
            devices: raw.devices,
            antennas: raw.antennas,
            dim: raw.dim,
            max_power,
            noise_var: raw.sigma2,
            bandwidth_hz: raw.bandwidth_hz,
            rician_ratio: raw.rician_ratio,
            seed: raw.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// All device-to-device channel vectors of one round.
///
/// `link(k, l)` is the channel from transmitter `k` to receiver `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    devices: usize,
    antennas: usize,
    round: u64,
    links: Vec<CVec>,
}

impl ChannelSet {
    /// Build from a generator `f(k, l)` evaluated for every ordered pair `k != l`.
    pub fn from_fn<F>(devices: usize, antennas: usize, round: u64, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> CVec,
    {
        if devices < 2 || antennas == 0 {
            return Err(Error::Dimension(format!("K={devices}, Nt={antennas}")));
        }
        let mut links = Vec::with_capacity(devices * devices);
        for k in 0..devices {
            for l in 0..devices {
                if k == l {
                    links.push(CVec::zeros(0));
                    continue;
                }
                let h = f(k, l);
                if h.len() != antennas {
                    return Err(Error::Dimension(format!(
                        "link ({k},{l}) has length {}, expected {antennas}",
                        h.len()
                    )));
                }
                if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::Data(format!("link ({k},{l}) has non-finite entries")));
                }
                links.push(h);
            }
        }
        Ok(ChannelSet { devices, antennas, round, links })
    }

    /// Every link equal to the real scalar-per-antenna vector `h`.
    pub fn constant(devices: usize, h: &[Complex64], round: u64) -> Result<Self> {
        Self::from_fn(devices, h.len(), round, |_, _| CVec::from_column_slice(h))
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Channel from transmitter `k` to receiver `l`.
    pub fn link(&self, k: usize, l: usize) -> &CVec {
        assert!(k != l && k < self.devices && l < self.devices, "no link ({k},{l})");
        &self.links[k * self.devices + l]
    }

    /// Receivers of transmitter `k` in ascending order.
    pub fn peers(&self, k: usize) -> impl Iterator<Item = usize> {
        (0..self.devices).filter(move |&l| l != k)
    }

    /// Nt x (K-1) matrix whose columns are the outgoing channels of `k`.
    pub fn device_matrix(&self, k: usize) -> Result<CMat> {
        if k >= self.devices {
            return Err(Error::Index { index: k, len: self.devices });
        }
        let cols: Vec<CVec> = self.peers(k).map(|l| self.link(k, l).clone()).collect();
        Ok(CMat::from_columns(&cols))
    }

    /// Sum of the outgoing channels of `k`.
    pub fn column_sum(&self, k: usize) -> CVec {
        let mut c = CVec::zeros(self.antennas);
        for l in self.peers(k) {
            c += self.link(k, l);
        }
        c
    }

    /// Scale every link by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for h in &mut out.links {
            *h *= Complex64::new(s, 0.0);
        }
        out
    }
}

/// Deterministic unit-modulus line-of-sight phase for one link antenna.
pub fn los_phase(k: usize, l: usize, antenna: usize) -> Complex64 {
    let n = (k * 31 + l * 17 + antenna) % 10;
    Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 10.0)
}

/// Draw the Rician channels of round `round` from `cfg.seed`.
pub fn sample_rician(cfg: &SystemConfig, round: u64) -> Result<ChannelSet> {
    cfg.validate()?;
    let r = cfg.rician_ratio;
    let (los, nlos) = if r.is_infinite() {
        (1.0, 0.0)
    } else {
        ((r / (1.0 + r)).sqrt(), (1.0 / (1.0 + r)).sqrt())
    };
    let k_total = cfg.devices;
    ChannelSet::from_fn(k_total, cfg.antennas, round, |k, l| {
        let mut rng = substream(cfg.seed, Domain::Channel, round, (k * k_total + l) as u64);
        DVector::from_fn(cfg.antennas, |a, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let g = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            los_phase(k, l, a) * los + g * nlos
        })
    })
}
