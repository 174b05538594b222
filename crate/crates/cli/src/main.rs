use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aircomp_cli::{commands, validate, ExperimentKind, ExperimentSpec};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aircomp", version, about = "Over-the-air aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregation error against SNR, antennas or devices.
    MseSweep(Common),
    /// Per-round latency against the number of devices.
    LatencySweep(Common),
    /// Distributed dual averaging under each transport.
    Train(Common),
    /// Beamformers for a single channel draw.
    Beamform(Common),
    /// Run the oracle suite; exits nonzero on any failure.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Scale the alignment factor seen by the simulator (fault injection).
        #[arg(long)]
        inject_eta_scale: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self, kind: ExperimentKind) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::from_file(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(k) = spec.kind {
            if k != kind {
                bail!("config describes {k:?} but {kind:?} was requested");
            }
        }
        spec.kind = Some(kind);
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
            spec.validate.trials = t;
        }
        if let Some(o) = &self.out {
            spec.out = Some(o.clone());
        }
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
        }
        Ok(spec)
    }
}

fn sink(spec: &ExperimentSpec) -> Result<Box<dyn Write>> {
    Ok(match &spec.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::MseSweep(c) => {
            let spec = c.load(ExperimentKind::MseSweep)?;
            commands::write_csv(&commands::mse_sweep(&spec)?, sink(&spec)?)?;
        }
        Command::LatencySweep(c) => {
            let spec = c.load(ExperimentKind::LatencySweep)?;
            commands::write_csv(&commands::latency_sweep(&spec)?, sink(&spec)?)?;
        }
        Command::Train(c) => {
            let spec = c.load(ExperimentKind::Train)?;
            commands::write_csv(&commands::train(&spec)?, sink(&spec)?)?;
        }
        Command::Beamform(c) => {
            let spec = c.load(ExperimentKind::Beamform)?;
            commands::write_csv(&commands::beamform(&spec)?, sink(&spec)?)?;
        }
        Command::Validate { common, inject_eta_scale } => {
            let mut spec = common.load(ExperimentKind::Validate)?;
            if inject_eta_scale.is_some() {
                spec.validate.inject_eta_scale = inject_eta_scale;
            }
            let report = validate(&spec)?;
            let mut out = sink(&spec)?;
            out.write_all(report.render().as_bytes())?;
            out.flush()?;
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
