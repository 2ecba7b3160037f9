//! `gridest`: synthesis, estimation, noise sweeps, cross-validation and
//! singular-spectrum reports from the command line.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{parse_methods, ExperimentConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gridest", version, about = "Phase-less line parameter estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated: a,b,c,d,net-reduced,net-impedance
    #[arg(long, global = true)]
    pub methods: Option<String>,
    /// ols, tls or tls-fallback
    #[arg(long, global = true)]
    pub engine: Option<String>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub block_size: Option<usize>,
    /// Line to estimate, written from->to.
    #[arg(long, global = true)]
    pub line: Option<String>,
    /// Network JSON file.
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the power flow and write noisy measurements with a truth sidecar.
    Simulate {
        /// Multiplier on the base noise; 0 writes clean data.
        #[arg(long)]
        noise_scale: Option<f64>,
        /// Number of samples to generate.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run the selected estimators on a measurement file.
    Estimate {
        data: PathBuf,
        /// Ground-truth phase sidecar, enabling bias predictions.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Monte Carlo noise sweep on synthetic data.
    Sweep {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Estimate on the start of the data and predict the power of the rest.
    Crossval {
        data: PathBuf,
        #[arg(long)]
        holdout_days: Option<f64>,
        /// Predict at the average operating point.
        #[arg(long)]
        average_point: bool,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Singular spectrum of the centered node data.
    Snr { data: PathBuf },
}

/// Defaults, then the JSON file, then the flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &cli.methods {
        cfg.methods = parse_methods(v)?;
    }
    if let Some(v) = &cli.engine {
        cfg.engine = v.parse().map_err(|e: gridest_core::GridError| CliError::config(e.to_string()))?;
    }
    if let Some(v) = cli.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = cli.trials {
        cfg.trials = v;
    }
    if let Some(v) = cli.block_size {
        cfg.block_size = v;
    }
    if let Some(v) = &cli.line {
        cfg.line = Some(v.clone());
    }
    if let Some(v) = &cli.network {
        cfg.network = Some(v.clone());
    }
    match &cli.command {
        Command::Simulate { noise_scale, samples } => {
            if let Some(v) = noise_scale {
                cfg.noise_scale = *v;
            }
            if let Some(v) = samples {
                cfg.generator.samples = *v;
            }
        }
        Command::Sweep { samples: Some(v) } => cfg.generator.samples = *v,
        Command::Crossval { holdout_days, average_point, .. } => {
            if let Some(v) = holdout_days {
                cfg.holdout_days = *v;
            }
            cfg.average_point |= *average_point;
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run one invocation and return its stdout text.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve_config(cli)?;
    log::debug!("configuration: {cfg:?}");
    match &cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::Estimate { data, truth } => commands::estimate(&cfg, data, truth.as_deref()),
        Command::Sweep { .. } => commands::sweep(&cfg),
        Command::Crossval { data, truth, .. } => commands::crossval(&cfg, data, truth.as_deref()),
        Command::Snr { data } => commands::snr(&cfg, data),
    }
}

/// Parse `args`, run and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("gridest: {e}");
            e.code
        }
    }
}
