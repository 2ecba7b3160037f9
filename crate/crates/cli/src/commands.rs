//! The five sub-commands. Each writes its files into the output directory
//! and returns the text printed on stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gridest_core::estimators::{estimate_network_impedance, estimate_network_reduced};
use gridest_core::measurement::{block_average, block_average_and_center};
use gridest_core::network_file::NetworkFile;
use gridest_core::sweep::{self, SweepAggregate, SweepConfig, SweepRow};
use gridest_core::synth::{self, FlowOptions, LoadProfile};
use gridest_core::{linalg, EstimateReport, EstimatorOptions, Flag, GridError, MeasurementSet, Method, NetworkModel, NoiseModel};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_line, ExperimentConfig};
use crate::error::CliError;

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::new(1, format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::new(1, format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> gridest_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn flag_name(f: &Flag) -> String {
    serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Smart-meter noise classes at the operating point of `set`.
pub fn default_noise(set: &MeasurementSet) -> NoiseModel {
    let volts: Vec<f64> = set.nodes.iter().flat_map(|n| n.v_mag.iter().copied()).collect();
    let amps: Vec<f64> = if set.lines.is_empty() {
        set.nodes.iter().flat_map(|n| n.i_mag.iter().copied()).collect()
    } else {
        set.lines.iter().flat_map(|l| l.i_mag.iter().copied()).collect()
    };
    NoiseModel::smart_meter_default(linalg::mean(&volts), linalg::mean(&amps))
}

fn options(cfg: &ExperimentConfig, noise: NoiseModel) -> EstimatorOptions {
    EstimatorOptions {
        engine: cfg.engine,
        noise,
        lambda: cfg.lambda,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        ..Default::default()
    }
}

pub struct CleanData {
    pub network: NetworkFile,
    pub model: NetworkModel,
    pub loads: LoadProfile,
    pub set: MeasurementSet,
}

/// Noise-free series of the configured network and load profile.
pub fn clean_data(cfg: &ExperimentConfig) -> Result<CleanData, CliError> {
    let network = cfg.network_file()?;
    let model = network.to_model().map_err(|e| CliError::config(format!("network: {e}")))?;
    let loads = match &cfg.loads {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| CliError::config(format!("load profile {}: {e}", p.display())))?;
            LoadProfile::read_csv(file).map_err(|e| CliError::reading(p, e))?
        }
        None => {
            let names: Vec<String> =
                model.names().iter().enumerate().filter(|(h, _)| *h != model.slack()).map(|(_, n)| n.clone()).collect();
            cfg.generator.generate(&names, cfg.seed).map_err(|e| CliError::config(e.to_string()))?
        }
    };
    let per_node = loads.per_timestamp(model.names());
    let set = synth::solve_network_flow(&model, cfg.source_voltage, &loads.timestamps, &per_node, &FlowOptions::default())
        .map_err(|e| match e {
            GridError::Synthesis(m) => CliError::new(crate::error::EXIT_SYNTHESIS, format!("power flow failed: {m}")),
            other => CliError::from(other),
        })?;
    Ok(CleanData { network, model, loads, set })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let clean = clean_data(cfg)?;
    let noise = cfg.noise.unwrap_or_else(|| default_noise(&clean.set)).scaled(cfg.noise_scale);
    let noisy = synth::apply_noise(&clean.set, &noise, cfg.seed)?;
    let out = &cfg.out;
    write_out(out, "measurements.csv", &csv_bytes(|b| noisy.write_csv(b))?)?;
    write_out(out, "truth.csv", &csv_bytes(|b| noisy.write_truth_csv(b))?)?;
    write_out(out, "loads.csv", &csv_bytes(|b| clean.loads.write_csv(b))?)?;
    write_out(out, "network.json", clean.network.to_json()?.as_bytes())?;
    write_out(out, "noise.json", serde_json::to_string_pretty(&noise).map_err(GridError::from)?.as_bytes())?;
    Ok(format!(
        "simulated {} samples on {} nodes and {} lines into {}\n",
        noisy.len(),
        noisy.nodes.len(),
        noisy.lines.len(),
        out.display()
    ))
}

fn read_data(path: &Path, truth: Option<&Path>) -> Result<MeasurementSet, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::schema(format!("cannot open {}: {e}", path.display())))?;
    let set = MeasurementSet::read_csv(file).map_err(|e| CliError::reading(path, e))?;
    match truth {
        None => Ok(set),
        Some(t) => {
            let file = fs::File::open(t).map_err(|e| CliError::schema(format!("cannot open {}: {e}", t.display())))?;
            set.read_truth_csv(file).map_err(|e| CliError::reading(t, e))
        }
    }
}

fn prepare(raw: &MeasurementSet, block: usize) -> Result<MeasurementSet, CliError> {
    block_average_and_center(raw, block).map_err(|e| match e {
        GridError::Input(m) => CliError::config(m),
        other => other.into(),
    })
}

/// Line selected by the configuration, or the first line of the data.
fn select_line(cfg: &ExperimentConfig, set: &MeasurementSet) -> Result<(usize, usize), CliError> {
    match &cfg.line {
        Some(spec) => {
            let (f, t) = parse_line(spec)?;
            let idx = |n: &str| set.node_index(n).ok_or_else(|| CliError::config(format!("unknown node '{n}' in line '{spec}'")));
            let line = (idx(&f)?, idx(&t)?);
            if set.line_index(line.0, line.1).is_none() {
                return Err(CliError::schema(format!("data has no line-flow channels for '{spec}'")));
            }
            Ok(line)
        }
        None => set
            .lines
            .first()
            .map(|l| (l.from, l.to))
            .ok_or_else(|| CliError::schema("data has no line-flow channels".to_string())),
    }
}

fn run_method(method: Method, data: &MeasurementSet, line: Option<(usize, usize)>, opts: &EstimatorOptions) -> gridest_core::Result<EstimateReport> {
    match method {
        Method::NetworkImpedance => estimate_network_impedance(data, opts),
        Method::NetworkReduced => estimate_network_reduced(data, opts),
        m => sweep::run_method(m, data, line.expect("single-line methods have a line"), opts),
    }
}

#[derive(Serialize)]
struct MethodOutcome {
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EstimateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<String>,
    samples: usize,
    block_size: usize,
    noise: NoiseModel,
    results: Vec<MethodOutcome>,
}

fn summary_line(method: Method, rep: &EstimateReport) -> String {
    let mut s = format!("{:<14}", method.tag());
    for key in ["g", "b", "r", "x"] {
        if let Some(v) = rep.scalar(key) {
            let _ = write!(s, " {key}={v:.6e}");
        }
    }
    for key in ["G", "R"] {
        if let Some(m) = rep.matrix(key) {
            let _ = write!(s, " {key}: {}x{}", m.nrows(), m.ncols());
        }
    }
    if !rep.flags.is_empty() {
        let _ = write!(s, " [{}]", rep.flags.iter().map(flag_name).collect::<Vec<_>>().join(", "));
    }
    s
}

pub fn estimate(cfg: &ExperimentConfig, data_path: &Path, truth: Option<&Path>) -> Result<String, CliError> {
    let raw = read_data(data_path, truth)?;
    let data = prepare(&raw, cfg.block_size)?;
    let noise = cfg.noise.unwrap_or_else(|| default_noise(&raw));
    let opts = options(cfg, noise);
    let line = if cfg.methods.iter().any(Method::is_single_line) { Some(select_line(cfg, &data)?) } else { None };
    let mut text = String::new();
    let mut results = Vec::new();
    for &method in &cfg.methods {
        match run_method(method, &data, line, &opts) {
            Ok(rep) => {
                let _ = writeln!(text, "{}", summary_line(method, &rep));
                results.push(MethodOutcome { method, report: Some(rep), error: None });
            }
            Err(e) => {
                log::warn!("method {method} failed: {e}");
                let _ = writeln!(text, "{:<14} failed: {e}", method.tag());
                results.push(MethodOutcome { method, report: None, error: Some(e.to_string()) });
            }
        }
    }
    let output = EstimateOutput {
        line: line.map(|(f, t)| format!("{}->{}", data.nodes[f].name, data.nodes[t].name)),
        samples: data.len(),
        block_size: cfg.block_size,
        noise,
        results,
    };
    let json = serde_json::to_string_pretty(&output).map_err(GridError::from)?;
    let path = write_out(&cfg.out, "estimate.json", json.as_bytes())?;
    let _ = writeln!(text, "wrote {}", path.display());
    Ok(text)
}

fn line_truth(cfg: &ExperimentConfig, clean: &CleanData) -> Result<((usize, usize), (f64, f64)), CliError> {
    let (f, t) = match &cfg.line {
        Some(spec) => parse_line(spec)?,
        None => {
            let e = clean.network.edges.first().ok_or_else(|| CliError::config("network has no edges"))?;
            (e.from.clone(), e.to.clone())
        }
    };
    let edge = clean
        .network
        .edges
        .iter()
        .find(|e| e.from == f && e.to == t)
        .ok_or_else(|| CliError::config(format!("network has no edge {f}->{t}")))?;
    let idx = |n: &str| clean.set.node_index(n).ok_or_else(|| CliError::config(format!("unknown node '{n}'")));
    Ok(((idx(&f)?, idx(&t)?), (edge.g, edge.b)))
}

const SWEEP_COLUMNS: [&str; 9] =
    ["noise_level", "trial", "method", "param", "estimate", "truth", "predicted_bias", "bound", "flags"];
const AGGREGATE_COLUMNS: [&str; 10] = [
    "noise_level",
    "method",
    "param",
    "truth",
    "count",
    "mean",
    "std",
    "mean_abs",
    "mean_predicted_bias",
    "mean_bound",
];

fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(SWEEP_COLUMNS)?;
        for r in rows {
            w.write_record([
                r.noise_level.to_string(),
                r.trial.to_string(),
                r.method.tag().to_string(),
                r.param.clone(),
                r.estimate.to_string(),
                r.truth.to_string(),
                opt(r.predicted_bias),
                opt(r.bound),
                r.flags.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn aggregate_csv(agg: &[SweepAggregate]) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(AGGREGATE_COLUMNS)?;
        for a in agg {
            w.write_record([
                a.noise_level.to_string(),
                a.method.tag().to_string(),
                a.param.clone(),
                a.truth.to_string(),
                a.count.to_string(),
                a.mean.to_string(),
                a.std.to_string(),
                a.mean_abs.to_string(),
                opt(a.mean_predicted_bias),
                opt(a.mean_bound),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Rows of a full sweep. Trials run in parallel; the result is ordered by
/// level, then trial, whatever the execution order.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let clean = clean_data(cfg)?;
    let (line, truth) = line_truth(cfg, &clean)?;
    let noise = match cfg.noise {
        Some(n) => n,
        None => sweep::signal_relative_noise(&clean.set, line, cfg.noise_fraction)?,
    };
    let sc = SweepConfig {
        multipliers: cfg.noise_multipliers.clone(),
        trials: cfg.trials,
        methods: cfg.methods.clone(),
        options: options(cfg, noise),
        block_size: cfg.block_size,
        seed: cfg.seed,
    };
    sc.validate().map_err(|e| CliError::config(e.to_string()))?;
    let jobs: Vec<(usize, usize)> =
        (0..sc.multipliers.len()).flat_map(|l| (0..sc.trials).map(move |t| (l, t))).collect();
    let per_trial: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(l, t)| sweep::run_trial(&clean.set, line, truth, &sc, l, t))
        .collect::<gridest_core::Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let rows = sweep_rows(cfg)?;
    let agg = sweep::aggregate(&rows);
    let p1 = write_out(&cfg.out, "sweep.csv", &sweep_csv(&rows)?)?;
    let p2 = write_out(&cfg.out, "sweep_aggregate.csv", &aggregate_csv(&agg)?)?;
    let mut text = String::new();
    let _ = writeln!(text, "{:>12} {:>6} {:>5} {:>14} {:>12} {:>14}", "noise_level", "method", "param", "mean", "std", "truth");
    for a in &agg {
        let _ = writeln!(
            text,
            "{:>12.4} {:>6} {:>5} {:>14.6e} {:>12.4e} {:>14.6e}",
            a.noise_level,
            a.method.tag(),
            a.param,
            a.mean,
            a.std,
            a.truth
        );
    }
    let _ = writeln!(text, "wrote {} rows to {} and {}", rows.len(), p1.display(), p2.display());
    Ok(text)
}

/// One row of the prediction table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerRow {
    pub label: String,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub flags: Vec<String>,
}

/// Phase-less power prediction `v_h (y (|v_h| - |v_k|))*`, either averaged
/// over samples or at the average operating point.
pub fn predict_power(g: f64, b: f64, v_h: &[f64], v_k: &[f64], average_point: bool) -> (f64, f64) {
    if average_point {
        let (vh, vk) = (linalg::mean(v_h), linalg::mean(v_k));
        let d = vh - vk;
        (vh * g * d, -vh * b * d)
    } else {
        let n = v_h.len() as f64;
        let (mut p, mut q) = (0.0, 0.0);
        for (vh, vk) in v_h.iter().zip(v_k) {
            p += vh * g * (vh - vk);
            q -= vh * b * (vh - vk);
        }
        (p / n, q / n)
    }
}

pub fn crossval_table(cfg: &ExperimentConfig, data_path: &Path, truth: Option<&Path>) -> Result<Vec<PowerRow>, CliError> {
    let raw = read_data(data_path, truth)?;
    if raw.len() < 2 {
        return Err(CliError::config("cross-validation needs at least two samples"));
    }
    let cadence = raw.timestamps[1] - raw.timestamps[0];
    let span = raw.timestamps[raw.len() - 1] - raw.timestamps[0] + cadence;
    let holdout = cfg.holdout_days * 86_400.0;
    if holdout >= span {
        return Err(CliError::config(format!(
            "holdout of {} days is not shorter than the {:.3} days of data",
            cfg.holdout_days,
            span / 86_400.0
        )));
    }
    let (train_raw, test_raw) = raw.split_at_time(raw.timestamps[0] + span - holdout);
    let train = prepare(&train_raw, cfg.block_size)?;
    let test = if cfg.block_size > 1 { block_average(&test_raw, cfg.block_size).map_err(|e| CliError::config(e.to_string()))? } else { test_raw };
    let line = select_line(cfg, &train)?;
    let ld = test.line_data(line.0, line.1)?;
    let measured_p: Vec<f64> = ld.v_h.iter().zip(&ld.c).map(|(v, c)| v * c).collect();
    let measured_q: Vec<f64> = ld.v_h.iter().zip(&ld.s).map(|(v, s)| v * s).collect();
    let mut rows = vec![PowerRow {
        label: "measured".into(),
        p_kw: linalg::mean(&measured_p) / 1e3,
        q_kvar: linalg::mean(&measured_q) / 1e3,
        flags: vec![],
    }];
    let opts = options(cfg, cfg.noise.unwrap_or_else(|| default_noise(&raw)));
    for &method in cfg.methods.iter().filter(|m| m.is_single_line()) {
        let label = method.tag().to_string();
        match sweep::run_method(method, &train, line, &opts) {
            Ok(rep) => {
                let (g, b) = (rep.scalar("g").unwrap_or(f64::NAN), rep.scalar("b").unwrap_or(f64::NAN));
                let (p, q) = predict_power(g, b, &ld.v_h, &ld.v_k, cfg.average_point);
                let mut flags: Vec<String> = rep.flags.iter().map(flag_name).collect();
                if !(p.is_finite() && q.is_finite()) {
                    flags.push("non-finite".into());
                }
                rows.push(PowerRow { label, p_kw: p / 1e3, q_kvar: q / 1e3, flags });
            }
            Err(e) => rows.push(PowerRow { label, p_kw: f64::NAN, q_kvar: f64::NAN, flags: vec![format!("error: {e}")] }),
        }
    }
    Ok(rows)
}

pub fn crossval(cfg: &ExperimentConfig, data_path: &Path, truth: Option<&Path>) -> Result<String, CliError> {
    let rows = crossval_table(cfg, data_path, truth)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "# holdout: last {} day(s); prediction v_h * conj(y * (|v_h| - |v_k|)), {}",
        cfg.holdout_days,
        if cfg.average_point { "at the average operating point" } else { "averaged over samples" }
    );
    let _ = writeln!(text, "{:<10} {:>14} {:>14}  flags", "method", "P [kW]", "Q [kvar]");
    for r in &rows {
        let _ = writeln!(text, "{:<10} {:>14.4} {:>14.4}  {}", r.label, r.p_kw, r.q_kvar, r.flags.join(", "));
    }
    let csv = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["method", "p_kw", "q_kvar", "flags"])?;
        for r in &rows {
            w.write_record([r.label.clone(), r.p_kw.to_string(), r.q_kvar.to_string(), r.flags.join(";")])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_out(&cfg.out, "crossval.csv", &csv)?;
    write_out(&cfg.out, "crossval.txt", text.as_bytes())?;
    Ok(text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnrReport {
    pub samples: usize,
    pub columns: Vec<String>,
    pub singular_values: Vec<f64>,
    /// Independent current directions once the injections sum to zero.
    pub signal_dimension: usize,
    /// Largest singular value over the largest one outside the signal subspace.
    pub snr: Option<f64>,
    /// Smallest signal singular value over the same noise floor.
    pub gap: Option<f64>,
}

/// Singular spectrum of the centered `[V, I_re, I_im]` node data.
pub fn snr_report(set: &MeasurementSet) -> SnrReport {
    let nd = set.nodal_data();
    let n = set.nodes.len();
    let m = DMatrix::from_fn(set.len(), 3 * n, |t, j| match j / n {
        0 => nd.v_mag[(t, j % n)],
        1 => nd.i_re[(t, j % n)],
        _ => nd.i_im[(t, j % n)],
    });
    let m = linalg::center_columns(&m);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let k = 2 * n.saturating_sub(1);
    let floor = sv.get(k).copied();
    let ratio = |num: Option<f64>| match (num, floor) {
        (Some(a), Some(f)) if f > 0.0 => Some(a / f),
        _ => None,
    };
    let mut columns = Vec::with_capacity(3 * n);
    for prefix in ["v_mag", "i_re", "i_im"] {
        columns.extend(set.nodes.iter().map(|nd| format!("{prefix}:{}", nd.name)));
    }
    SnrReport {
        samples: set.len(),
        columns,
        snr: ratio(sv.first().copied()),
        gap: ratio(k.checked_sub(1).and_then(|i| sv.get(i).copied())),
        singular_values: sv,
        signal_dimension: k,
    }
}

pub fn snr(cfg: &ExperimentConfig, data_path: &Path) -> Result<String, CliError> {
    let raw = read_data(data_path, None)?;
    let data = prepare(&raw, cfg.block_size)?;
    let rep = snr_report(&data);
    let json = serde_json::to_string_pretty(&rep).map_err(GridError::from)?;
    write_out(&cfg.out, "snr.json", json.as_bytes())?;
    let mut text = String::new();
    for (i, s) in rep.singular_values.iter().enumerate() {
        let _ = writeln!(text, "sigma_{:<3} {:.6e}", i + 1, s);
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let _ = writeln!(text, "signal dimension {}; snr {}; gap {}", rep.signal_dimension, fmt(rep.snr), fmt(rep.gap));
    Ok(text)
}
