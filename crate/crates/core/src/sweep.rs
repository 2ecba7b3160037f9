//! Monte Carlo noise sweeps over the single-line methods.
//!
//! A trial is a pure function of the clean data, the noise level and a seed.
//! Seeds are split from the base seed with [`trial_seed`], so trials can run
//! in any order or in parallel and still give identical rows.

use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};
use crate::estimators::{self, EstimateReport, EstimatorOptions, Flag, Method};
use crate::linalg;
use crate::measurement::{self, MeasurementSet};
use crate::noise::NoiseModel;
use crate::synth;

/// `count` multipliers spaced evenly in log scale over `[lo, hi]`.
pub fn log_multipliers(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
            .collect(),
    }
}

/// Eight multipliers from 0.1× to 10× of the base noise.
pub fn default_multipliers() -> Vec<f64> {
    log_multipliers(0.1, 10.0, 8)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at level `level`: the base seed plus a splitmix64
/// hash of the (level, trial) pair.
pub fn trial_seed(base: u64, level: usize, trial: usize) -> u64 {
    base.wrapping_add(splitmix64(((level as u64) << 32) ^ trial as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub multipliers: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub options: EstimatorOptions,
    /// Samples per averaged block before estimation.
    pub block_size: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            multipliers: default_multipliers(),
            trials: 50,
            methods: vec![Method::Direct, Method::Joint, Method::Reduced, Method::Impedance],
            options: EstimatorOptions::default(),
            block_size: 1,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(GridError::Input("trials must be at least 1".into()));
        }
        if self.multipliers.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(GridError::Input("noise multipliers must be finite and non-negative".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| !m.is_single_line()) {
            return Err(GridError::Input(format!("method '{m}' is not a single-line method")));
        }
        if self.block_size == 0 {
            return Err(GridError::Input("block size must be at least 1".into()));
        }
        self.options.validate()
    }
}

/// Noise whose standard deviations are `fraction` of the spread of the clean
/// signal on `line`: the voltage drop (split over both magnitudes), the line
/// current magnitude and its power angle. With `fraction = 0.1` the largest
/// default multiplier brings the noise up to the signal itself.
pub fn signal_relative_noise(clean: &MeasurementSet, line: (usize, usize), fraction: f64) -> Result<NoiseModel> {
    let ld = clean.line_data(line.0, line.1)?;
    let sd = |v: &[f64]| linalg::variance(v).sqrt();
    NoiseModel::new(
        fraction * sd(&ld.dv) / std::f64::consts::SQRT_2,
        fraction * sd(&ld.i_mag),
        fraction * sd(&ld.phi),
    )
}

/// One estimated parameter of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise_level: f64,
    pub trial: usize,
    pub method: Method,
    pub param: String,
    pub estimate: f64,
    pub truth: f64,
    pub predicted_bias: Option<f64>,
    /// Lower bound on the expected magnitude, where one applies.
    pub bound: Option<f64>,
    pub flags: Vec<String>,
}

pub fn run_method(method: Method, data: &MeasurementSet, line: (usize, usize), opts: &EstimatorOptions) -> Result<EstimateReport> {
    match method {
        Method::Direct => estimators::estimate_line_admittance_direct(data, line, opts),
        Method::Joint => estimators::estimate_line_joint(data, line, opts),
        Method::Reduced => estimators::estimate_line_reduced(data, line, opts),
        Method::Impedance => estimators::estimate_line_impedance(data, line, opts),
        other => Err(GridError::Input(format!("method '{other}' needs network data"))),
    }
}

fn flag_names(flags: &[Flag]) -> Vec<String> {
    flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect()
}

/// Rows for `g` and `b` of every method on one noisy realisation of `clean`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    clean: &MeasurementSet,
    line: (usize, usize),
    truth: (f64, f64),
    cfg: &SweepConfig,
    level: usize,
    trial: usize,
) -> Result<Vec<SweepRow>> {
    let mult = cfg.multipliers[level];
    let noise = cfg.options.noise.scaled(mult);
    let seed = trial_seed(cfg.seed, level, trial);
    let noisy = synth::apply_noise(clean, &noise, seed)?;
    let data = measurement::block_average_and_center(&noisy, cfg.block_size)?;
    let opts = EstimatorOptions { noise, ..cfg.options };
    let mut rows = Vec::with_capacity(2 * cfg.methods.len());
    for &method in &cfg.methods {
        let outcome = run_method(method, &data, line, &opts);
        for (param, t) in [("g", truth.0), ("b", truth.1)] {
            let mut row = SweepRow {
                noise_level: mult,
                trial,
                method,
                param: param.to_string(),
                estimate: f64::NAN,
                truth: t,
                predicted_bias: None,
                bound: None,
                flags: vec![],
            };
            match &outcome {
                Ok(rep) => {
                    row.estimate = rep.scalar(param).unwrap_or(f64::NAN);
                    row.flags = flag_names(&rep.flags);
                    for b in &rep.predicted_bias {
                        if let Some(v) = b.predicted_bias.get(param) {
                            row.predicted_bias = Some(*v);
                        }
                        if let Some(v) = b.predicted_bias.get(&format!("abs_{param}_lower")) {
                            row.bound = Some(*v);
                        }
                    }
                }
                Err(e) => row.flags = vec![format!("error: {e}")],
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Every trial in order (levels outer, trials inner).
pub fn run_line_sweep(clean: &MeasurementSet, line: (usize, usize), truth: (f64, f64), cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for level in 0..cfg.multipliers.len() {
        for trial in 0..cfg.trials {
            rows.extend(run_trial(clean, line, truth, cfg, level, trial)?);
        }
    }
    Ok(rows)
}

/// Mean and spread of one (level, method, param) group over its trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub noise_level: f64,
    pub method: Method,
    pub param: String,
    pub truth: f64,
    /// Trials with a finite estimate.
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_abs: f64,
    pub mean_predicted_bias: Option<f64>,
    pub mean_bound: Option<f64>,
}

impl SweepAggregate {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// Aggregates in first-appearance order of the groups.
pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepAggregate> {
    let mut keys: Vec<(u64, Method, String)> = Vec::new();
    for r in rows {
        let k = (r.noise_level.to_bits(), r.method, r.param.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(lvl, method, param)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.noise_level.to_bits() == lvl && r.method == method && r.param == param)
                .collect();
            let est: Vec<f64> = group.iter().map(|r| r.estimate).filter(|v| v.is_finite()).collect();
            let opt_mean = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
                let v: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| linalg::mean(&v))
            };
            SweepAggregate {
                noise_level: f64::from_bits(lvl),
                method,
                param,
                truth: group[0].truth,
                count: est.len(),
                mean: if est.is_empty() { f64::NAN } else { linalg::mean(&est) },
                std: if est.len() > 1 { linalg::variance(&est).sqrt() } else { 0.0 },
                mean_abs: if est.is_empty() { f64::NAN } else { est.iter().map(|v| v.abs()).sum::<f64>() / est.len() as f64 },
                mean_predicted_bias: opt_mean(&|r| r.predicted_bias),
                mean_bound: opt_mean(&|r| r.bound),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LinePiModel;
    use crate::synth::{FlowOptions, ProfileGenerator};
    use num_complex::Complex64;

    fn clean(n: usize) -> MeasurementSet {
        let prof = ProfileGenerator { samples: n, mean_p: 20.0, mean_q: 6.0, ..Default::default() }
            .generate(&["k".to_string()], 1)
            .unwrap();
        let loads: Vec<Complex64> = (0..n).map(|t| Complex64::new(prof.p[0][t], prof.q[0][t])).collect();
        synth::solve_line_flow(&LinePiModel::new(10.0, -0.5), 16e3, &prof.timestamps, &loads, &FlowOptions::default())
            .unwrap()
    }

    #[test]
    fn multipliers_are_log_spaced() {
        let m = default_multipliers();
        assert_eq!(m.len(), 8);
        assert!((m[0] - 0.1).abs() < 1e-12 && (m[7] - 10.0).abs() < 1e-9);
        let r: Vec<f64> = m.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(r.iter().all(|x| (x - r[0]).abs() < 1e-9));
    }

    #[test]
    fn seeds_differ_across_trials_and_levels() {
        let mut seen = std::collections::HashSet::new();
        for l in 0..8 {
            for t in 0..50 {
                assert!(seen.insert(trial_seed(7, l, t)));
            }
        }
    }

    #[test]
    fn one_trial_one_method_gives_two_rows() {
        let cfg = SweepConfig { multipliers: vec![1.0], trials: 1, methods: vec![Method::Impedance], ..Default::default() };
        let rows = run_line_sweep(&clean(200), (0, 1), (10.0, -0.5), &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].param.as_str(), rows[1].param.as_str()), ("g", "b"));
    }

    #[test]
    fn zero_noise_level_reproduces_truth() {
        let cfg = SweepConfig {
            multipliers: vec![0.0],
            trials: 2,
            methods: vec![Method::Reduced, Method::Impedance],
            ..Default::default()
        };
        let rows = run_line_sweep(&clean(300), (0, 1), (10.0, -0.5), &cfg).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert!((r.estimate - r.truth).abs() < 1e-6 * r.truth.abs(), "{r:?}");
        }
    }

    #[test]
    fn aggregates_match_rows_and_runs_are_repeatable() {
        let cfg = SweepConfig { multipliers: vec![0.5, 2.0], trials: 4, methods: vec![Method::Direct, Method::Impedance], seed: 3, ..Default::default() };
        let set = clean(200);
        let rows = run_line_sweep(&set, (0, 1), (10.0, -0.5), &cfg).unwrap();
        assert_eq!(rows.len(), 2 * 4 * 2 * 2);
        assert_eq!(rows, run_line_sweep(&set, (0, 1), (10.0, -0.5), &cfg).unwrap());
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 8);
        for a in &agg {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.noise_level == a.noise_level && r.method == a.method && r.param == a.param)
                .map(|r| r.estimate)
                .collect();
            assert!((linalg::mean(&v) - a.mean).abs() <= 1e-12 * a.mean.abs());
        }
    }

    #[test]
    fn network_methods_are_rejected() {
        let cfg = SweepConfig { methods: vec![Method::NetworkImpedance], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
