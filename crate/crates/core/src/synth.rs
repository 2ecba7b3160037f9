//! Steady-state synthesis of measurement series and sensor-noise corruption.
//!
//! Node channels describe the current injected into the network (`i = Y v`),
//! so a load node reports a current opposite to the one it draws. The power
//! angle is the voltage phase minus the current phase, which gives
//! `|i| cos φ = Re(i e^{-jθ})` and `|i| sin φ = -Im(i e^{-jθ})` in the node's
//! own voltage frame. Line channels carry the sending-end flow `h → k`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::error::{GridError, Result};
use crate::grid::{Branch, LinePiModel, NetworkModel};
use crate::measurement::{LineChannels, MeasurementSet, NodeChannels};
use crate::noise::NoiseModel;

pub const LOAD_COLUMNS: [&str; 4] = ["timestamp", "node", "p", "q"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest voltage phase (rad) before the small-angle flag is raised.
    pub theta_max: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100, theta_max: 0.1 }
    }
}

/// Fixed-point (Z-bus) power flow over an arbitrary admittance matrix with
/// one or more voltage-controlled slack nodes. `loads[t][h]` is the complex
/// power drawn at node `h`; entries of slack nodes are ignored.
pub(crate) fn solve_ybus(
    y: &DMatrix<Complex64>,
    slacks: &[usize],
    slack_voltage: &[Complex64],
    timestamps: &[f64],
    loads: &[Vec<Complex64>],
    opts: &FlowOptions,
) -> Result<Vec<DVector<Complex64>>> {
    let n = y.nrows();
    if loads.len() != timestamps.len() {
        return Err(GridError::Input("one load vector per timestamp is required".into()));
    }
    let free: Vec<usize> = (0..n).filter(|h| !slacks.contains(h)).collect();
    let m = free.len();
    let y_ll = DMatrix::from_fn(m, m, |i, j| y[(free[i], free[j])]);
    let y_ls = DMatrix::from_fn(m, slacks.len(), |i, j| y[(free[i], slacks[j])]);
    let v_s = DVector::from_column_slice(slack_voltage);
    let lu = y_ll.lu();
    let no_load = lu
        .solve(&(-(&y_ls * &v_s)))
        .ok_or_else(|| GridError::Synthesis("admittance matrix of the non-slack nodes is singular".into()))?;
    let v_scale = v_s.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut out = Vec::with_capacity(loads.len());
    for (t, load) in loads.iter().enumerate() {
        if load.len() != n {
            return Err(GridError::Input(format!(
                "load vector at timestamp {} has {} entries for {n} nodes",
                timestamps[t],
                load.len()
            )));
        }
        let mut v_l = no_load.clone();
        let mut trace = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let i_l = DVector::from_fn(m, |i, _| -(load[free[i]] / v_l[i]).conj());
            let next = lu
                .solve(&(i_l - &y_ls * &v_s))
                .ok_or_else(|| GridError::Synthesis("singular solve".into()))?;
            let step = (&next - &v_l).iter().map(|d| d.norm()).fold(0.0, f64::max) / v_scale;
            v_l = next;
            trace.push(step);
            if !step.is_finite() || v_l.iter().any(|v| v.norm() < 1e-6 * v_scale) {
                break;
            }
            if step <= opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            let tail: Vec<String> = trace.iter().rev().take(5).rev().map(|s| format!("{s:.3e}")).collect();
            return Err(GridError::Synthesis(format!(
                "power flow did not converge at timestamp {} after {} iterations (last steps: {})",
                timestamps[t],
                trace.len(),
                tail.join(", ")
            )));
        }
        let mut v = DVector::zeros(n);
        for (j, &s) in slacks.iter().enumerate() {
            v[s] = v_s[j];
        }
        for (i, &h) in free.iter().enumerate() {
            v[h] = v_l[i];
        }
        out.push(v);
    }
    Ok(out)
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

/// Magnitude and power angle of a current relative to a voltage phasor.
fn polar_relative(i: Complex64, v: Complex64) -> (f64, f64) {
    let mag = i.norm();
    if mag == 0.0 {
        return (0.0, 0.0);
    }
    (mag, wrap_angle(v.arg() - i.arg()))
}

/// Build a measurement set from solved voltages.
pub(crate) fn assemble(
    names: &[String],
    y: &DMatrix<Complex64>,
    branches: &[Branch],
    timestamps: &[f64],
    voltages: &[DVector<Complex64>],
    opts: &FlowOptions,
) -> Result<MeasurementSet> {
    let n = names.len();
    let len = timestamps.len();
    let mut nodes: Vec<NodeChannels> = names
        .iter()
        .map(|name| NodeChannels {
            name: name.clone(),
            v_mag: Vec::with_capacity(len),
            i_mag: Vec::with_capacity(len),
            phi: Vec::with_capacity(len),
        })
        .collect();
    let mut lines: Vec<LineChannels> = branches
        .iter()
        .map(|br| LineChannels { from: br.from, to: br.to, i_mag: Vec::new(), phi: Vec::new() })
        .collect();
    let mut theta = vec![Vec::with_capacity(len); n];
    let mut worst: f64 = 0.0;
    for v in voltages {
        let i = y * v;
        for h in 0..n {
            let (mag, phi) = polar_relative(i[h], v[h]);
            nodes[h].v_mag.push(v[h].norm());
            nodes[h].i_mag.push(mag);
            nodes[h].phi.push(phi);
            theta[h].push(v[h].arg());
            worst = worst.max(v[h].arg().abs());
        }
        for (line, br) in lines.iter_mut().zip(branches) {
            let flow = br.line.admittance() * (v[br.from] - v[br.to]) + br.line.shunt_y / 2.0 * v[br.from];
            let (mag, phi) = polar_relative(flow, v[br.from]);
            line.i_mag.push(mag);
            line.phi.push(phi);
        }
    }
    let mut set = MeasurementSet::new(timestamps.to_vec(), nodes, lines)?.with_latent_theta(theta)?;
    if worst > opts.theta_max {
        let msg = format!(
            "voltage phase reaches {worst:.4} rad, beyond the small-angle limit {}",
            opts.theta_max
        );
        log::warn!("{msg}");
        set.small_angle_violation = true;
        set.warnings.push(msg);
    }
    Ok(set)
}

/// Series of a single line fed at node `h` with the source voltage and
/// supplying `loads[t]` at node `k`.
pub fn solve_line_flow(
    line: &LinePiModel,
    source_voltage: f64,
    timestamps: &[f64],
    loads: &[Complex64],
    opts: &FlowOptions,
) -> Result<MeasurementSet> {
    if line.admittance().norm() == 0.0 {
        return Err(GridError::Domain("zero line admittance".into()));
    }
    let net = NetworkModel::from_branches(
        vec!["h".into(), "k".into()],
        vec![Branch { from: 0, to: 1, line: *line }],
        &[],
        0,
    )?;
    let per_node: Vec<Vec<Complex64>> = loads.iter().map(|&s| vec![Complex64::new(0.0, 0.0), s]).collect();
    solve_network_flow(&net, source_voltage, timestamps, &per_node, opts)
}

/// Series of every node and branch of `net`. `loads[t][h]` is the power drawn
/// at node `h` (negative for generation); the slack entry is ignored.
pub fn solve_network_flow(
    net: &NetworkModel,
    slack_voltage: f64,
    timestamps: &[f64],
    loads: &[Vec<Complex64>],
    opts: &FlowOptions,
) -> Result<MeasurementSet> {
    let y = net.admittance();
    let v = solve_ybus(
        &y,
        &[net.slack()],
        &[Complex64::new(slack_voltage, 0.0)],
        timestamps,
        loads,
        opts,
    )?;
    assemble(net.names(), &y, net.branches(), timestamps, &v, opts)
}

/// 64-bit FNV-1a, used to key noise streams by channel name.
fn stream_key(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn channel_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_key(parts));
    rng
}

fn perturb(values: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    for v in values {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
}

/// A negative magnitude is the same phasor with the angle turned by π.
fn fold_negative(i_mag: &mut [f64], phi: &mut [f64]) {
    for (m, p) in i_mag.iter_mut().zip(phi.iter_mut()) {
        if *m < 0.0 {
            *m = -*m;
            *p = wrap_angle(*p + std::f64::consts::PI);
        }
    }
}

/// Independent Gaussian noise on every voltage magnitude, current magnitude
/// and power angle. Each channel draws from its own ChaCha stream keyed by
/// the channel name, so the noise on a channel does not depend on which other
/// channels are present.
pub fn apply_noise(clean: &MeasurementSet, noise: &NoiseModel, seed: u64) -> Result<MeasurementSet> {
    noise.validate()?;
    if clean.noisy {
        return Err(GridError::Input("measurement set already carries sensor noise".into()));
    }
    let mut out = clean.clone();
    out.noisy = true;
    if noise.is_zero() {
        return Ok(out);
    }
    for node in &mut out.nodes {
        let name = node.name.clone();
        perturb(&mut node.v_mag, noise.sigma_v_mag, &mut channel_rng(seed, &["node", &name, "v_mag"]));
        perturb(&mut node.i_mag, noise.sigma_i_mag, &mut channel_rng(seed, &["node", &name, "i_mag"]));
        perturb(&mut node.phi, noise.sigma_phi, &mut channel_rng(seed, &["node", &name, "phi"]));
        fold_negative(&mut node.i_mag, &mut node.phi);
    }
    let ids: Vec<String> = out.lines.iter().map(|l| out.line_id(l)).collect();
    for (line, id) in out.lines.iter_mut().zip(&ids) {
        perturb(&mut line.i_mag, noise.sigma_i_mag, &mut channel_rng(seed, &["line", id, "i_mag"]));
        perturb(&mut line.phi, noise.sigma_phi, &mut channel_rng(seed, &["line", id, "phi"]));
        fold_negative(&mut line.i_mag, &mut line.phi);
    }
    Ok(out)
}

/// Active and reactive power drawn per node (W, var).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadProfile {
    pub timestamps: Vec<f64>,
    pub nodes: Vec<String>,
    /// `p[node][t]`
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

/// Log-normal loads around a daily sinusoidal shape.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileGenerator {
    pub samples: usize,
    pub cadence_s: f64,
    pub mean_p: f64,
    pub mean_q: f64,
    /// Standard deviation of the log of the load around the daily shape.
    pub spread: f64,
    /// Relative amplitude of the daily cycle.
    pub daily_amplitude: f64,
}

impl Default for ProfileGenerator {
    fn default() -> Self {
        Self {
            samples: 7 * 24 * 60,
            cadence_s: 60.0,
            mean_p: 100e3,
            mean_q: 30e3,
            spread: 0.5,
            daily_amplitude: 0.5,
        }
    }
}

impl ProfileGenerator {
    /// Independent active and reactive draws per node, so that the two
    /// current components are not collinear.
    pub fn generate(&self, nodes: &[String], seed: u64) -> Result<LoadProfile> {
        if self.samples == 0 || !(self.cadence_s > 0.0) {
            return Err(GridError::Input("load generator needs samples > 0 and a positive cadence".into()));
        }
        let ln = LogNormal::new(-0.5 * self.spread * self.spread, self.spread)
            .map_err(|e| GridError::Input(format!("invalid load spread: {e}")))?;
        let timestamps: Vec<f64> = (0..self.samples).map(|t| t as f64 * self.cadence_s).collect();
        let shape: Vec<f64> = timestamps
            .iter()
            .map(|ts| {
                let day = ts / 86_400.0;
                1.0 + self.daily_amplitude * (2.0 * std::f64::consts::PI * (day - 0.3)).sin()
            })
            .collect();
        let draw = |name: &str, what: &str, mean: f64| -> Vec<f64> {
            let mut rng = channel_rng(seed, &["load", name, what]);
            shape.iter().map(|s| mean * s * ln.sample(&mut rng)).collect()
        };
        Ok(LoadProfile {
            timestamps: timestamps.clone(),
            nodes: nodes.to_vec(),
            p: nodes.iter().map(|n| draw(n, "p", self.mean_p)).collect(),
            q: nodes.iter().map(|n| draw(n, "q", self.mean_q)).collect(),
        })
    }
}

impl LoadProfile {
    pub fn constant(nodes: &[String], samples: usize, cadence_s: f64, p: f64, q: f64) -> Self {
        Self {
            timestamps: (0..samples).map(|t| t as f64 * cadence_s).collect(),
            nodes: nodes.to_vec(),
            p: vec![vec![p; samples]; nodes.len()],
            q: vec![vec![q; samples]; nodes.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let m = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|x| x * factor).collect()).collect();
        Self { p: m(&self.p), q: m(&self.q), ..self.clone() }
    }

    /// Per-timestamp complex loads ordered like `names`; nodes absent from
    /// the profile draw nothing.
    pub fn per_timestamp(&self, names: &[String]) -> Vec<Vec<Complex64>> {
        let idx: Vec<Option<usize>> = names.iter().map(|n| self.nodes.iter().position(|m| m == n)).collect();
        (0..self.len())
            .map(|t| {
                idx.iter()
                    .map(|i| match i {
                        Some(i) => Complex64::new(self.p[*i][t], self.q[*i][t]),
                        None => Complex64::new(0.0, 0.0),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOAD_COLUMNS)?;
        for t in 0..self.len() {
            let ts = self.timestamps[t].to_string();
            for (h, name) in self.nodes.iter().enumerate() {
                w.write_record([ts.as_str(), name, &self.p[h][t].to_string(), &self.q[h][t].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != LOAD_COLUMNS {
            return Err(GridError::Schema(format!(
                "load profile columns must be [{}], found [{}]",
                LOAD_COLUMNS.join(", "),
                header.join(", ")
            )));
        }
        let mut out = LoadProfile { timestamps: Vec::new(), nodes: Vec::new(), p: Vec::new(), q: Vec::new() };
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| {
                rec[i].trim().parse::<f64>().map_err(|_| {
                    GridError::Schema(format!("row {}: column '{}' is not a number", row + 2, LOAD_COLUMNS[i]))
                })
            };
            let ts = num(0)?;
            if out.timestamps.last() != Some(&ts) {
                out.timestamps.push(ts);
            }
            let h = match out.nodes.iter().position(|n| n == &rec[1]) {
                Some(h) => h,
                None => {
                    if out.timestamps.len() > 1 {
                        return Err(GridError::Schema(format!("node '{}' appears after the first timestamp", &rec[1])));
                    }
                    out.nodes.push(rec[1].to_string());
                    out.p.push(Vec::new());
                    out.q.push(Vec::new());
                    out.nodes.len() - 1
                }
            };
            out.p[h].push(num(2)?);
            out.q[h].push(num(3)?);
        }
        let n = out.timestamps.len();
        if out.p.iter().any(|p| p.len() != n) {
            return Err(GridError::Schema("every node needs exactly one row per timestamp".into()));
        }
        Ok(out)
    }
}
