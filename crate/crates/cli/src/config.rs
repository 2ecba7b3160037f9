//! Experiment configuration: built-in defaults, overridden by a JSON file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use gridest_core::network_file::NetworkFile;
use gridest_core::synth::ProfileGenerator;
use gridest_core::sweep;
use gridest_core::{Engine, Method, NoiseModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network JSON; a single line with y = 10 - 0.5j S when absent.
    pub network: Option<PathBuf>,
    /// Load profile CSV; generated from `generator` and `seed` when absent.
    pub loads: Option<PathBuf>,
    pub generator: ProfileGenerator,
    pub source_voltage: f64,
    pub seed: u64,
    /// Noise of one raw reading at multiplier 1. Smart-meter classes at the
    /// data's operating point when absent.
    pub noise: Option<NoiseModel>,
    /// Noise multiplier applied by `simulate`.
    pub noise_scale: f64,
    /// Without `noise`, the sweep sets each channel's noise at multiplier 1
    /// to this fraction of the clean signal spread.
    pub noise_fraction: f64,
    pub noise_multipliers: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub engine: Engine,
    pub lambda: f64,
    pub block_size: usize,
    /// Line to estimate as `from->to`; the first line when absent.
    pub line: Option<String>,
    pub max_iter: usize,
    pub tol: f64,
    pub holdout_days: f64,
    /// Predict the holdout power at the average operating point instead of
    /// averaging per-sample predictions.
    pub average_point: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: None,
            loads: None,
            generator: ProfileGenerator::default(),
            source_voltage: 16e3,
            seed: 0,
            noise: None,
            noise_scale: 1.0,
            noise_fraction: 0.1,
            noise_multipliers: sweep::default_multipliers(),
            trials: 50,
            methods: vec![Method::Direct, Method::Joint, Method::Reduced, Method::Impedance],
            engine: Engine::Tls,
            lambda: 0.0,
            block_size: 1,
            line: None,
            max_iter: 100,
            tol: 1e-8,
            holdout_days: 1.0,
            average_point: false,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file itself.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.network, &mut cfg.loads].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.noise_multipliers.is_empty() || self.noise_multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad("noise multipliers must be a non-empty list of finite values ≥ 0".into());
        }
        if let Some(m) = self.methods.iter().find(|m| matches!(m, Method::ThreePhaseCoupled | Method::ThreePhaseDecoupled)) {
            return bad(format!("method '{m}' needs three-phase data, which the CLI does not read"));
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and ≥ 0, got {}", self.lambda));
        }
        if self.block_size == 0 {
            return bad("block size must be at least 1".into());
        }
        if !(self.source_voltage.is_finite() && self.source_voltage > 0.0) {
            return bad("source voltage must be positive".into());
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad("noise scale must be finite and ≥ 0".into());
        }
        if !(self.noise_fraction.is_finite() && self.noise_fraction > 0.0) {
            return bad("noise fraction must be positive".into());
        }
        if !(self.holdout_days > 0.0) {
            return bad("holdout must be positive".into());
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return bad("max_iter and tol must be positive".into());
        }
        if let Some(n) = &self.noise {
            n.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn network_file(&self) -> Result<NetworkFile, CliError> {
        match &self.network {
            Some(p) => NetworkFile::read(p).map_err(|e| CliError::config(format!("network {}: {e}", p.display()))),
            None => Ok(NetworkFile::single_line(10.0, -0.5)),
        }
    }
}

/// Parse `from->to`.
pub fn parse_line(spec: &str) -> Result<(String, String), CliError> {
    spec.split_once("->")
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| CliError::config(format!("line must be written as from->to, got '{spec}'")))
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| CliError::config(e.to_string())))
        .collect()
}
