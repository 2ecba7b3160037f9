//! Phase-less measurement time series and their file formats.
//!
//! Nodes carry voltage magnitude, current-injection magnitude and power angle.
//! Monitored lines carry the current-flow magnitude and the angle between the
//! flow and the sending-end voltage. The voltage phase is kept only as a
//! ground-truth side channel for synthetic data and is never part of the
//! estimator-facing views.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{GridError, Result};
use crate::linalg;

pub const MEASUREMENT_COLUMNS: [&str; 5] = ["timestamp", "id", "v_mag", "i_mag", "phi"];
pub const TRUTH_COLUMNS: [&str; 3] = ["timestamp", "node", "theta"];

#[derive(Clone, Debug, PartialEq)]
pub struct NodeChannels {
    pub name: String,
    pub v_mag: Vec<f64>,
    pub i_mag: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChannels {
    pub from: usize,
    pub to: usize,
    pub i_mag: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub timestamps: Vec<f64>,
    pub nodes: Vec<NodeChannels>,
    pub lines: Vec<LineChannels>,
    /// Ground-truth voltage phase per node (synthesis only).
    latent_theta: Option<Vec<Vec<f64>>>,
    /// Voltage magnitudes captured with the latent phase, before any
    /// noise or centering, for the omitted phase term.
    latent_v_mag: Option<Vec<Vec<f64>>>,
    /// Cartesian current means removed by centering, per node and per line.
    current_offsets: Option<(Vec<Complex64>, Vec<Complex64>)>,
    pub centered: bool,
    pub block_size: usize,
    pub noisy: bool,
    /// Set when the synthetic operating point left the small-angle regime.
    pub small_angle_violation: bool,
    pub warnings: Vec<String>,
}

/// Estimator-facing series for one line `h → k`. `i_mag` and `phi` are the
/// operating point before centering; the noise covariance is evaluated there.
#[derive(Clone, Debug, PartialEq)]
pub struct LineData {
    /// `|v_h| - |v_k|`
    pub dv: Vec<f64>,
    /// `|i_hk| cos φ_hk`
    pub c: Vec<f64>,
    /// `|i_hk| sin φ_hk`
    pub s: Vec<f64>,
    pub v_h: Vec<f64>,
    pub v_k: Vec<f64>,
    pub i_mag: Vec<f64>,
    pub phi: Vec<f64>,
}

impl LineData {
    pub fn len(&self) -> usize {
        self.dv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dv.is_empty()
    }

    /// Multiply every voltage by `kv` and every current by `ki`.
    pub fn rescaled(&self, kv: f64, ki: f64) -> Self {
        let m = |v: &[f64], k: f64| v.iter().map(|x| x * k).collect::<Vec<_>>();
        Self {
            dv: m(&self.dv, kv),
            c: m(&self.c, ki),
            s: m(&self.s, ki),
            v_h: m(&self.v_h, kv),
            v_k: m(&self.v_k, kv),
            i_mag: m(&self.i_mag, ki),
            phi: self.phi.clone(),
        }
    }
}

/// Nodal matrices (rows = samples, columns = nodes).
#[derive(Clone, Debug, PartialEq)]
pub struct NodalData {
    pub v_mag: DMatrix<f64>,
    pub i_re: DMatrix<f64>,
    pub i_im: DMatrix<f64>,
    pub i_mag: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

impl MeasurementSet {
    pub fn new(timestamps: Vec<f64>, nodes: Vec<NodeChannels>, lines: Vec<LineChannels>) -> Result<Self> {
        let set = Self {
            timestamps,
            nodes,
            lines,
            latent_theta: None,
            latent_v_mag: None,
            current_offsets: None,
            centered: false,
            block_size: 1,
            noisy: false,
            small_angle_violation: false,
            warnings: Vec::new(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_latent_theta(mut self, theta: Vec<Vec<f64>>) -> Result<Self> {
        if theta.len() != self.nodes.len() || theta.iter().any(|t| t.len() != self.len()) {
            return Err(GridError::Input("latent phase shape does not match the node channels".into()));
        }
        self.latent_theta = Some(theta);
        self.latent_v_mag = Some(self.nodes.iter().map(|n| n.v_mag.clone()).collect());
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        for node in &self.nodes {
            if node.v_mag.len() != n || node.i_mag.len() != n || node.phi.len() != n {
                return Err(GridError::Input(format!("node '{}' has misaligned channels", node.name)));
            }
        }
        for line in &self.lines {
            if line.from >= self.nodes.len() || line.to >= self.nodes.len() {
                return Err(GridError::Input("line refers to an unknown node".into()));
            }
            if line.i_mag.len() != n || line.phi.len() != n {
                return Err(GridError::Input("line has misaligned channels".into()));
            }
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::Input("timestamps must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn line_index(&self, from: usize, to: usize) -> Option<usize> {
        self.lines.iter().position(|l| l.from == from && l.to == to)
    }

    pub fn line_id(&self, line: &LineChannels) -> String {
        format!("{}->{}", self.nodes[line.from].name, self.nodes[line.to].name)
    }

    /// Ground-truth voltage phases. Only synthetic data has them.
    pub fn latent_theta(&self) -> Option<&[Vec<f64>]> {
        self.latent_theta.as_deref()
    }

    /// Copy without the latent phase channel.
    pub fn without_latent(&self) -> Self {
        let mut out = self.clone();
        out.latent_theta = None;
        out.latent_v_mag = None;
        out
    }

    /// Series of the line `from → to` used by the single-line estimators.
    pub fn line_data(&self, from: usize, to: usize) -> Result<LineData> {
        let li = self.line_index(from, to).ok_or_else(|| {
            GridError::Input(format!("no line-flow channels for line {from} -> {to}"))
        })?;
        let line = &self.lines[li];
        let (vh, vk) = (&self.nodes[from].v_mag, &self.nodes[to].v_mag);
        let dv = vh.iter().zip(vk).map(|(a, b)| a - b).collect();
        let c = line.i_mag.iter().zip(&line.phi).map(|(i, p)| i * p.cos()).collect();
        let s = line.i_mag.iter().zip(&line.phi).map(|(i, p)| i * p.sin()).collect();
        let offset = self.current_offsets.as_ref().map(|(_, l)| l[li]);
        let (i_mag, phi) = operating_point(&line.i_mag, &line.phi, offset);
        Ok(LineData { dv, c, s, v_h: vh.clone(), v_k: vk.clone(), i_mag, phi })
    }

    /// The omitted phase term `|v_k| θ_hk` of a line (ground truth).
    pub fn latent_phase_term(&self, from: usize, to: usize) -> Option<Vec<f64>> {
        let theta = self.latent_theta.as_ref()?;
        let vk = &self.latent_v_mag.as_ref()?[to];
        Some(
            (0..self.len())
                .map(|t| vk[t] * (theta[from][t] - theta[to][t]))
                .collect(),
        )
    }

    pub fn nodal_data(&self) -> NodalData {
        let n = self.nodes.len();
        let rows = self.len();
        let col = |f: &dyn Fn(&NodeChannels, usize) -> f64| {
            DMatrix::from_fn(rows, n, |t, h| f(&self.nodes[h], t))
        };
        let ops: Vec<(Vec<f64>, Vec<f64>)> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(h, nd)| operating_point(&nd.i_mag, &nd.phi, self.current_offsets.as_ref().map(|(o, _)| o[h])))
            .collect();
        NodalData {
            v_mag: col(&|nd, t| nd.v_mag[t]),
            i_re: col(&|nd, t| nd.i_mag[t] * nd.phi[t].cos()),
            i_im: col(&|nd, t| nd.i_mag[t] * nd.phi[t].sin()),
            i_mag: DMatrix::from_fn(rows, n, |t, h| ops[h].0[t]),
            phi: DMatrix::from_fn(rows, n, |t, h| ops[h].1[t]),
        }
    }

    /// Samples with index in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let cut = |v: &Vec<f64>| v[range.clone()].to_vec();
        Self {
            timestamps: cut(&self.timestamps),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeChannels {
                    name: n.name.clone(),
                    v_mag: cut(&n.v_mag),
                    i_mag: cut(&n.i_mag),
                    phi: cut(&n.phi),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineChannels { from: l.from, to: l.to, i_mag: cut(&l.i_mag), phi: cut(&l.phi) })
                .collect(),
            latent_theta: self.latent_theta.as_ref().map(|th| th.iter().map(cut).collect()),
            latent_v_mag: self.latent_v_mag.as_ref().map(|v| v.iter().map(cut).collect()),
            current_offsets: self.current_offsets.clone(),
            centered: self.centered,
            block_size: self.block_size,
            noisy: self.noisy,
            small_angle_violation: self.small_angle_violation,
            warnings: self.warnings.clone(),
        }
    }

    /// Split into samples strictly before `t` and the rest.
    pub fn split_at_time(&self, t: f64) -> (Self, Self) {
        let cut = self.timestamps.partition_point(|&ts| ts < t);
        (self.slice(0..cut), self.slice(cut..self.len()))
    }
}

/// Polar current at the operating point: the channel itself, or with the
/// Cartesian mean removed by centering added back.
fn operating_point(i_mag: &[f64], phi: &[f64], offset: Option<Complex64>) -> (Vec<f64>, Vec<f64>) {
    match offset {
        None => (i_mag.to_vec(), phi.to_vec()),
        Some(o) => i_mag
            .iter()
            .zip(phi)
            .map(|(&i, &p)| {
                let z = Complex64::from_polar(i, p) + o;
                (z.norm(), z.arg())
            })
            .unzip(),
    }
}

fn block_means(v: &[f64], block: usize, blocks: usize) -> Vec<f64> {
    (0..blocks)
        .map(|b| v[b * block..(b + 1) * block].iter().sum::<f64>() / block as f64)
        .collect()
}

fn subtract_mean(v: &mut [f64]) {
    let m = linalg::mean(v);
    v.iter_mut().for_each(|x| *x -= m);
}

/// Average polar current channels in the Cartesian domain.
fn average_current(i_mag: &[f64], phi: &[f64], block: usize, blocks: usize) -> (Vec<f64>, Vec<f64>) {
    let re: Vec<f64> = i_mag.iter().zip(phi).map(|(i, p)| i * p.cos()).collect();
    let im: Vec<f64> = i_mag.iter().zip(phi).map(|(i, p)| i * p.sin()).collect();
    let (re, im) = (block_means(&re, block, blocks), block_means(&im, block, blocks));
    re.iter().zip(&im).map(|(a, b)| (a.hypot(*b), b.atan2(*a))).unzip()
}

/// Center a polar current in the Cartesian domain; returns the removed mean.
fn center_current(i_mag: &mut [f64], phi: &mut [f64]) -> Complex64 {
    let re: Vec<f64> = i_mag.iter().zip(phi.iter()).map(|(i, p)| i * p.cos()).collect();
    let im: Vec<f64> = i_mag.iter().zip(phi.iter()).map(|(i, p)| i * p.sin()).collect();
    let m = Complex64::new(linalg::mean(&re), linalg::mean(&im));
    for t in 0..re.len() {
        let (a, b) = (re[t] - m.re, im[t] - m.im);
        i_mag[t] = a.hypot(b);
        phi[t] = b.atan2(a);
    }
    m
}

/// Synchronised block averages. Currents are averaged as Cartesian phasors
/// relative to their own voltage; a trailing partial block is dropped.
pub fn block_average(set: &MeasurementSet, block: usize) -> Result<MeasurementSet> {
    if block == 0 {
        return Err(GridError::Input("block size must be at least 1".into()));
    }
    if block > set.len() {
        return Err(GridError::Input(format!(
            "block size {block} exceeds the {} available samples",
            set.len()
        )));
    }
    if block == 1 {
        return Ok(set.clone());
    }
    let blocks = set.len() / block;
    let mut out = set.clone();
    let dropped = set.len() - blocks * block;
    if dropped > 0 {
        let msg = format!("dropped {dropped} trailing samples that do not fill a block of {block}");
        log::warn!("{msg}");
        out.warnings.push(msg);
    }
    out.timestamps = (0..blocks).map(|b| set.timestamps[b * block]).collect();
    for (dst, src) in out.nodes.iter_mut().zip(&set.nodes) {
        dst.v_mag = block_means(&src.v_mag, block, blocks);
        let (i, p) = average_current(&src.i_mag, &src.phi, block, blocks);
        dst.i_mag = i;
        dst.phi = p;
    }
    for (dst, src) in out.lines.iter_mut().zip(&set.lines) {
        let (i, p) = average_current(&src.i_mag, &src.phi, block, blocks);
        dst.i_mag = i;
        dst.phi = p;
    }
    if let Some(theta) = &set.latent_theta {
        out.latent_theta = Some(theta.iter().map(|t| block_means(t, block, blocks)).collect());
    }
    if let Some(v) = &set.latent_v_mag {
        out.latent_v_mag = Some(v.iter().map(|t| block_means(t, block, blocks)).collect());
    }
    out.block_size = set.block_size * block;
    Ok(out)
}

/// Subtract the window mean from every estimator-facing channel: voltage
/// magnitudes directly and currents as Cartesian components. The polar
/// columns of a centered set encode the centered Cartesian current, so
/// `|i| cos φ` and `|i| sin φ` have zero mean. The latent channels are left as is.
pub fn center(set: &MeasurementSet) -> MeasurementSet {
    let mut out = set.clone();
    let mut node_off = Vec::with_capacity(out.nodes.len());
    for node in &mut out.nodes {
        subtract_mean(&mut node.v_mag);
        node_off.push(center_current(&mut node.i_mag, &mut node.phi));
    }
    let mut line_off = Vec::with_capacity(out.lines.len());
    for line in &mut out.lines {
        line_off.push(center_current(&mut line.i_mag, &mut line.phi));
    }
    if let Some((n0, l0)) = &set.current_offsets {
        node_off.iter_mut().zip(n0).for_each(|(a, b)| *a += b);
        line_off.iter_mut().zip(l0).for_each(|(a, b)| *a += b);
    }
    out.current_offsets = Some((node_off, line_off));
    out.centered = true;
    out
}

pub fn block_average_and_center(set: &MeasurementSet, block: usize) -> Result<MeasurementSet> {
    Ok(center(&block_average(set, block)?))
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().collect();
    let missing: Vec<&str> = expected.iter().copied().filter(|c| !found.contains(c)).collect();
    let extra: Vec<&str> = found.iter().copied().filter(|c| !expected.contains(c)).collect();
    if !missing.is_empty() || !extra.is_empty() || found != expected {
        return Err(GridError::Schema(format!(
            "expected columns [{}]; missing [{}], unexpected [{}]",
            expected.join(", "),
            missing.join(", "),
            extra.join(", ")
        )));
    }
    Ok(())
}

impl MeasurementSet {
    /// Long-format CSV: one row per timestamp and node or line. Line rows have
    /// id `from->to` and an empty `v_mag`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(MEASUREMENT_COLUMNS)?;
        for t in 0..self.len() {
            let ts = self.timestamps[t].to_string();
            for node in &self.nodes {
                w.write_record([
                    ts.as_str(),
                    node.name.as_str(),
                    &node.v_mag[t].to_string(),
                    &node.i_mag[t].to_string(),
                    &node.phi[t].to_string(),
                ])?;
            }
            for line in &self.lines {
                w.write_record([
                    ts.as_str(),
                    &self.line_id(line),
                    "",
                    &line.i_mag[t].to_string(),
                    &line.phi[t].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Ground-truth sidecar with the latent voltage phases.
    pub fn write_truth_csv<W: Write>(&self, writer: W) -> Result<()> {
        let theta = self
            .latent_theta
            .as_ref()
            .ok_or_else(|| GridError::Input("no ground-truth phase to write".into()))?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRUTH_COLUMNS)?;
        for t in 0..self.len() {
            let ts = self.timestamps[t].to_string();
            for (h, node) in self.nodes.iter().enumerate() {
                w.write_record([ts.as_str(), node.name.as_str(), &theta[h][t].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        check_header(r.headers()?, &MEASUREMENT_COLUMNS)?;
        let parse = |s: &str, what: &str, row: usize| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| GridError::Schema(format!("row {row}: column '{what}' is not a number: '{s}'")))
        };
        let mut timestamps: Vec<f64> = Vec::new();
        let mut node_names: Vec<String> = Vec::new();
        let mut line_ids: Vec<(String, String)> = Vec::new();
        let mut node_rows: BTreeMap<String, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut line_rows: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = row + 2;
            let ts = parse(&rec[0], "timestamp", row)?;
            if timestamps.last().is_none_or(|&last| last != ts) {
                timestamps.push(ts);
            }
            let id = rec[1].to_string();
            let i_mag = parse(&rec[3], "i_mag", row)?;
            let phi = parse(&rec[4], "phi", row)?;
            if let Some((from, to)) = id.split_once("->") {
                let key = (from.to_string(), to.to_string());
                if timestamps.len() == 1 && !line_ids.contains(&key) {
                    line_ids.push(key.clone());
                }
                let e = line_rows.entry(key).or_default();
                e.0.push(i_mag);
                e.1.push(phi);
            } else {
                let v = parse(&rec[2], "v_mag", row)?;
                if timestamps.len() == 1 && !node_names.contains(&id) {
                    node_names.push(id.clone());
                }
                let e = node_rows.entry(id).or_default();
                e.0.push(v);
                e.1.push(i_mag);
                e.2.push(phi);
            }
        }
        let n = timestamps.len();
        let mut nodes = Vec::new();
        for name in &node_names {
            let (v, i, p) = node_rows.remove(name).unwrap_or_default();
            if v.len() != n {
                return Err(GridError::Schema(format!("node '{name}' has {} rows for {n} timestamps", v.len())));
            }
            nodes.push(NodeChannels { name: name.clone(), v_mag: v, i_mag: i, phi: p });
        }
        if let Some(extra) = node_rows.keys().next() {
            return Err(GridError::Schema(format!("node '{extra}' is missing from the first timestamp")));
        }
        let mut lines = Vec::new();
        for (from, to) in &line_ids {
            let (i, p) = line_rows.remove(&(from.clone(), to.clone())).unwrap_or_default();
            if i.len() != n {
                return Err(GridError::Schema(format!("line '{from}->{to}' has {} rows for {n} timestamps", i.len())));
            }
            let idx = |name: &str| {
                node_names
                    .iter()
                    .position(|x| x == name)
                    .ok_or_else(|| GridError::Schema(format!("line refers to unknown node '{name}'")))
            };
            lines.push(LineChannels { from: idx(from)?, to: idx(to)?, i_mag: i, phi: p });
        }
        if let Some((f, t)) = line_rows.keys().next() {
            return Err(GridError::Schema(format!("line '{f}->{t}' is missing from the first timestamp")));
        }
        MeasurementSet::new(timestamps, nodes, lines).map_err(|e| GridError::Schema(e.to_string()))
    }

    /// Attach ground-truth phases read from a sidecar file.
    pub fn read_truth_csv<R: Read>(self, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        check_header(r.headers()?, &TRUTH_COLUMNS)?;
        let mut theta = vec![Vec::with_capacity(self.len()); self.nodes.len()];
        for rec in r.records() {
            let rec = rec?;
            let h = self
                .node_index(&rec[1])
                .ok_or_else(|| GridError::Schema(format!("unknown node '{}' in truth file", &rec[1])))?;
            let v = rec[2]
                .parse::<f64>()
                .map_err(|_| GridError::Schema(format!("bad theta '{}'", &rec[2])))?;
            theta[h].push(v);
        }
        self.with_latent_theta(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy(n: usize) -> MeasurementSet {
        let ts: Vec<f64> = (0..n).map(|t| t as f64 * 60.0).collect();
        let wave = |a: f64, w: f64| (0..n).map(|t| a + (t as f64 * w).sin()).collect::<Vec<_>>();
        let nodes = vec![
            NodeChannels { name: "h".into(), v_mag: wave(100.0, 0.3), i_mag: wave(5.0, 0.7), phi: wave(0.2, 0.1).iter().map(|p| p * 0.1).collect() },
            NodeChannels { name: "k".into(), v_mag: wave(99.0, 0.2), i_mag: wave(5.0, 0.5), phi: vec![0.1; n] },
        ];
        let lines = vec![LineChannels { from: 0, to: 1, i_mag: wave(5.0, 0.9), phi: vec![0.05; n] }];
        MeasurementSet::new(ts, nodes, lines).unwrap()
    }

    #[test]
    fn centering_zeroes_estimator_channel_means() {
        let c = center(&toy(50));
        let d = c.line_data(0, 1).unwrap();
        assert!(linalg::mean(&d.dv).abs() < 1e-12);
        assert!(linalg::mean(&d.c).abs() < 1e-12);
        assert!(linalg::mean(&d.s).abs() < 1e-12);
        let nd = c.nodal_data();
        for h in 0..2 {
            assert!(nd.i_re.column(h).mean().abs() < 1e-12);
            assert!(nd.i_im.column(h).mean().abs() < 1e-12);
        }
    }

    #[test]
    fn block_one_on_centered_data_is_identity() {
        let c = center(&toy(20));
        let again = block_average_and_center(&c, 1).unwrap();
        for (a, b) in c.nodes[0].v_mag.iter().zip(&again.nodes[0].v_mag) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let (d1, d2) = (c.line_data(0, 1).unwrap(), again.line_data(0, 1).unwrap());
        for (a, b) in d1.c.iter().zip(&d2.c) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_channel_centers_to_zero() {
        let mut s = toy(12);
        s.nodes[1].v_mag = vec![230.0; 12];
        let c = block_average_and_center(&s, 3).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.nodes[1].v_mag.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn trailing_remainder_is_dropped_with_warning() {
        let c = block_average(&toy(10), 4).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.block_size, 4);
        assert_eq!(c.warnings.len(), 1);
        assert!(block_average(&toy(10), 11).is_err());
        assert!(block_average(&toy(10), 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = toy(7);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = MeasurementSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_schema_errors_name_columns() {
        let text = "timestamp,id,v_mag,i_mag\n0,h,1,2\n";
        match MeasurementSet::read_csv(text.as_bytes()) {
            Err(GridError::Schema(msg)) => assert!(msg.contains("phi"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let text = "timestamp,id,v_mag,i_mag,phi,extra\n";
        match MeasurementSet::read_csv(text.as_bytes()) {
            Err(GridError::Schema(msg)) => assert!(msg.contains("extra")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn latent_phase_is_excluded_from_views() {
        let s = toy(5).with_latent_theta(vec![vec![0.0; 5], vec![-1e-3; 5]]).unwrap();
        assert!(s.latent_theta().is_some());
        assert!(s.without_latent().latent_theta().is_none());
        let e = s.latent_phase_term(0, 1).unwrap();
        assert_relative_eq!(e[0], s.nodes[1].v_mag[0] * 1e-3);
        assert_eq!(center(&s).latent_phase_term(0, 1).unwrap(), e);
    }

    #[test]
    fn centering_keeps_the_operating_point() {
        let s = toy(30);
        let c = block_average_and_center(&center(&s), 1).unwrap();
        let (a, b) = (s.line_data(0, 1).unwrap(), c.line_data(0, 1).unwrap());
        for t in 0..30 {
            assert_relative_eq!(a.i_mag[t], b.i_mag[t], epsilon = 1e-12);
            assert_relative_eq!(a.phi[t], b.phi[t], epsilon = 1e-12);
        }
        let (na, nb) = (s.nodal_data(), c.nodal_data());
        assert_relative_eq!(na.i_mag, nb.i_mag, epsilon = 1e-12);
    }

    #[test]
    fn split_by_time() {
        let (a, b) = toy(10).split_at_time(300.0);
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 5);
    }
}
