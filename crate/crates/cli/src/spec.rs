//! Experiment description files.

use std::path::{Path, PathBuf};

use aircomp::optim::{TaskKind, TaskSpec, XiRule};
use aircomp::SystemConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MseSweep,
    LatencySweep,
    Train,
    Beamform,
    Validate,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// One of `snr_db`, `sigma2`, `P0_dbm`, `Nt`, `K`, `D`.
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub task: String,
    pub rounds: usize,
    pub beta: f64,
    pub heterogeneous: bool,
    pub record_every: usize,
    /// `omega`, `running_max`, or a number.
    pub step_xi: String,
    pub seeds: usize,
    pub samples_per_device: usize,
    pub batch: usize,
    pub ridge: f64,
    pub gradient_noise: f64,
    pub target_spread: f64,
    pub bits: u32,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            task: "quadratic_consensus".into(),
            rounds: 500,
            beta: 0.5,
            heterogeneous: true,
            record_every: 10,
            step_xi: "omega".into(),
            seeds: 1,
            samples_per_device: 50,
            batch: 10,
            ridge: 0.1,
            gradient_noise: 0.0,
            target_spread: 1.0,
            bits: 16,
        }
    }
}

impl TrainSpec {
    pub fn xi_rule(&self) -> Result<XiRule> {
        Ok(match self.step_xi.as_str() {
            "omega" => XiRule::Omega,
            "running_max" => XiRule::RunningMax,
            other => {
                let v: f64 = other.parse().with_context(|| format!("step_xi = {other:?}"))?;
                if !(v > 0.0) {
                    bail!("step_xi must be positive, got {v}");
                }
                XiRule::Fixed(v)
            }
        })
    }

    pub fn task_spec(&self, devices: usize, dim: usize) -> Result<TaskSpec> {
        Ok(TaskSpec {
            heterogeneous: self.heterogeneous,
            samples_per_device: self.samples_per_device,
            batch: self.batch,
            ridge: self.ridge,
            gradient_noise: self.gradient_noise,
            target_spread: self.target_spread,
            ..TaskSpec::new(TaskKind::parse(&self.task)?, devices, dim)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSpec {
    /// Scale applied to the alignment factor used by the simulator only.
    pub inject_eta_scale: Option<f64>,
    pub instances: usize,
    pub trials: usize,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        ValidateSpec { inject_eta_scale: None, instances: 10, trials: 4000 }
    }
}

/// A full experiment: what to run, on which system, and where to write it.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub schemes: Vec<String>,
    #[serde(default)]
    pub system: Option<toml::Table>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub validate: ValidateSpec,
}

fn default_trials() -> usize {
    100
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: None,
            seed: 0,
            trials: default_trials(),
            out: None,
            schemes: Vec::new(),
            system: None,
            sweep: None,
            train: TrainSpec::default(),
            validate: ValidateSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).context("parsing experiment spec")?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                bail!("sweep grid for {} is empty", sw.param);
            }
        }
        Ok(())
    }

    /// Base system with the spec seed applied.
    pub fn system_config(&self) -> Result<SystemConfig> {
        let base = match &self.system {
            Some(t) => SystemConfig::from_table(t.clone())?,
            None => SystemConfig::default(),
        };
        Ok(SystemConfig { seed: self.seed, ..base })
    }

    /// Short SHA-256 of the canonical serialization.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn schemes_or(&self, default: &[&str]) -> Vec<String> {
        if self.schemes.is_empty() {
            default.iter().map(|s| s.to_string()).collect()
        } else {
            self.schemes.clone()
        }
    }
}

/// Apply one sweep value to a system.
pub fn apply_param(base: &SystemConfig, param: &str, value: f64) -> Result<SystemConfig> {
    let count = |v: f64| -> Result<usize> {
        if v < 0.0 || v.fract() != 0.0 {
            bail!("{param} needs a non-negative integer, got {value}");
        }
        Ok(v as usize)
    };
    let mut cfg = base.clone();
    match param {
        "snr_db" => cfg = cfg.with_snr_db(value),
        "sigma2" => cfg.noise_var = value,
        "P0_dbm" => cfg.max_power = aircomp::channel::dbm_to_watt(value),
        "P0_watt" => cfg.max_power = value,
        "Nt" => cfg.antennas = count(value)?,
        "K" => cfg.devices = count(value)?,
        "D" => cfg.dim = count(value)?,
        other => bail!("unknown sweep parameter {other:?}"),
    }
    Ok(cfg)
}
