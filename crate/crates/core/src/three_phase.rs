//! Three-phase networks whose lines have equal self and equal mutual
//! impedances, and their synthetic measurements.
//!
//! Each phase is measured in its own frame: the slack voltages of the three
//! phases are taken in phase, so the per-phase power angles and voltage
//! phases stay small and the single-phase linearisation applies to every
//! phase. Nodes are numbered `3h + p` in the stacked admittance matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{GridError, Result};
use crate::grid::{Branch, LinePiModel, NetworkModel};
use crate::measurement::{self, MeasurementSet, NodeChannels};
use crate::noise::NoiseModel;
use crate::synth::{self, FlowOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreePhaseLine {
    pub from: usize,
    pub to: usize,
    pub z_self: Complex64,
    pub z_mutual: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreePhaseNetwork {
    names: Vec<String>,
    lines: Vec<ThreePhaseLine>,
    slack: usize,
}

/// Impedance structure `R = R_L ⊗ I + R_M ⊗ (J - I)` and likewise for `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreePhaseImpedance {
    pub r_self: DMatrix<f64>,
    pub x_self: DMatrix<f64>,
    pub r_mutual: DMatrix<f64>,
    pub x_mutual: DMatrix<f64>,
}

impl ThreePhaseNetwork {
    pub fn new(names: Vec<String>, lines: Vec<ThreePhaseLine>, slack: usize) -> Result<Self> {
        let net = Self { names, lines, slack };
        for l in &net.lines {
            let z0 = l.z_self + 2.0 * l.z_mutual;
            let z1 = l.z_self - l.z_mutual;
            if z0.norm() == 0.0 || z1.norm() == 0.0 {
                return Err(GridError::Domain(format!("line {} -> {} has a singular impedance matrix", l.from, l.to)));
            }
        }
        net.sequence_networks()?;
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    fn network_with(&self, f: impl Fn(&ThreePhaseLine) -> Complex64) -> Result<NetworkModel> {
        let branches = self
            .lines
            .iter()
            .map(|l| {
                let y = f(l);
                Branch { from: l.from, to: l.to, line: LinePiModel::new(y.re, y.im) }
            })
            .collect();
        NetworkModel::from_branches(self.names.clone(), branches, &[], self.slack)
    }

    /// Zero- and positive-sequence single-phase networks, with series
    /// admittances `1/(z_L + 2 z_M)` and `1/(z_L - z_M)`.
    pub fn sequence_networks(&self) -> Result<(NetworkModel, NetworkModel)> {
        let zero = self.network_with(|l| 1.0 / (l.z_self + 2.0 * l.z_mutual))?;
        let pos = self.network_with(|l| 1.0 / (l.z_self - l.z_mutual))?;
        Ok((zero, pos))
    }

    /// Self and mutual admittance Laplacians `Y_L`, `Y_M`.
    pub fn self_mutual_admittance(&self) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let (zero, pos) = self.sequence_networks()?;
        let (y0, y1) = (zero.admittance(), pos.admittance());
        let third = Complex64::new(1.0 / 3.0, 0.0);
        Ok(((&y0 + &y1 * Complex64::new(2.0, 0.0)) * third, (&y0 - &y1) * third))
    }

    /// Stacked `3n × 3n` admittance matrix.
    pub fn admittance(&self) -> Result<DMatrix<Complex64>> {
        let (yl, ym) = self.self_mutual_admittance()?;
        let n = self.n();
        Ok(DMatrix::from_fn(3 * n, 3 * n, |i, j| {
            let (h, p, k, q) = (i / 3, i % 3, j / 3, j % 3);
            if p == q {
                yl[(h, k)]
            } else {
                ym[(h, k)]
            }
        }))
    }

    pub fn equivalent_impedance(&self) -> Result<ThreePhaseImpedance> {
        let (zero, pos) = self.sequence_networks()?;
        let (r0, x0) = zero.equivalent_impedance()?;
        let (r1, x1) = pos.equivalent_impedance()?;
        Ok(ThreePhaseImpedance {
            r_self: (&r0 + &r1 * 2.0) / 3.0,
            x_self: (&x0 + &x1 * 2.0) / 3.0,
            r_mutual: (&r0 - &r1) / 3.0,
            x_mutual: (&x0 - &x1) / 3.0,
        })
    }
}

/// Per-phase measurement sets with identical timestamps and node order.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreePhaseMeasurementSet {
    pub phases: [MeasurementSet; 3],
}

impl ThreePhaseMeasurementSet {
    pub fn new(phases: [MeasurementSet; 3]) -> Result<Self> {
        let a = &phases[0];
        for p in &phases[1..] {
            if p.timestamps != a.timestamps {
                return Err(GridError::Input("phase channels are not aligned in time".into()));
            }
            if p.nodes.len() != a.nodes.len() || p.nodes.iter().zip(&a.nodes).any(|(x, y)| x.name != y.name) {
                return Err(GridError::Input("phase channels list different nodes".into()));
            }
        }
        Ok(Self { phases })
    }

    pub fn len(&self) -> usize {
        self.phases[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases[0].is_empty()
    }

    pub fn apply_noise(&self, noise: &NoiseModel, seed: u64) -> Result<Self> {
        // Phase index enters the seed so that the phases draw independent noise.
        let noisy = [0u64, 1, 2].map(|p| synth::apply_noise(&self.phases[p as usize], noise, seed ^ (p << 56)));
        let [a, b, c] = noisy;
        Self::new([a?, b?, c?])
    }

    pub fn block_average_and_center(&self, block: usize) -> Result<Self> {
        let [a, b, c] = [0, 1, 2].map(|p| measurement::block_average_and_center(&self.phases[p], block));
        Self::new([a?, b?, c?])
    }
}

/// Solve the stacked three-phase power flow. `loads[t]` has `3n` entries
/// indexed `3h + p`; the slack entries are ignored.
pub fn solve_three_phase_flow(
    net: &ThreePhaseNetwork,
    slack_voltage: f64,
    timestamps: &[f64],
    loads: &[Vec<Complex64>],
    opts: &FlowOptions,
) -> Result<ThreePhaseMeasurementSet> {
    let y = net.admittance()?;
    let s = net.slack();
    let slacks = [3 * s, 3 * s + 1, 3 * s + 2];
    let v0 = Complex64::new(slack_voltage, 0.0);
    let volts = synth::solve_ybus(&y, &slacks, &[v0; 3], timestamps, loads, opts)?;
    let n = net.n();
    let phase = |p: usize| -> Result<MeasurementSet> {
        let mut nodes: Vec<NodeChannels> = net
            .names()
            .iter()
            .map(|name| NodeChannels { name: name.clone(), v_mag: vec![], i_mag: vec![], phi: vec![] })
            .collect();
        let mut theta = vec![Vec::with_capacity(timestamps.len()); n];
        let mut worst: f64 = 0.0;
        for v in &volts {
            let i: DVector<Complex64> = &y * v;
            for h in 0..n {
                let (vv, ii) = (v[3 * h + p], i[3 * h + p]);
                nodes[h].v_mag.push(vv.norm());
                let (mag, phi) = if ii.norm() == 0.0 {
                    (0.0, 0.0)
                } else {
                    (ii.norm(), synth::wrap_angle(vv.arg() - ii.arg()))
                };
                nodes[h].i_mag.push(mag);
                nodes[h].phi.push(phi);
                theta[h].push(vv.arg());
                worst = worst.max(vv.arg().abs());
            }
        }
        let mut set = MeasurementSet::new(timestamps.to_vec(), nodes, vec![])?.with_latent_theta(theta)?;
        if worst > opts.theta_max {
            set.small_angle_violation = true;
            set.warnings.push(format!("phase {p}: voltage phase reaches {worst:.4} rad"));
        }
        Ok(set)
    };
    ThreePhaseMeasurementSet::new([phase(0)?, phase(1)?, phase(2)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network_rx_from_gb;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn feeder(mutual: Complex64) -> ThreePhaseNetwork {
        let names: Vec<String> = (0..4).map(|i| format!("n{i}")).collect();
        let zs = [c(0.10, 0.05), c(0.20, 0.08), c(0.15, 0.04)];
        let ends = [(0, 1), (1, 2), (1, 3)];
        let lines = ends
            .iter()
            .zip(zs)
            .map(|(&(f, t), z)| ThreePhaseLine { from: f, to: t, z_self: z, z_mutual: mutual * z })
            .collect();
        ThreePhaseNetwork::new(names, lines, 0).unwrap()
    }

    #[test]
    fn kronecker_impedance_matches_stacked_inversion() {
        let net = feeder(c(0.3, 0.0));
        let y = net.admittance().unwrap();
        let (r3, x3) = network_rx_from_gb(&y.map(|v| v.re), &y.map(|v| v.im)).unwrap();
        let imp = net.equivalent_impedance().unwrap();
        let n = net.n();
        for i in 0..3 * n {
            for j in 0..3 * n {
                let (rr, xx) = if i % 3 == j % 3 {
                    (imp.r_self[(i / 3, j / 3)], imp.x_self[(i / 3, j / 3)])
                } else {
                    (imp.r_mutual[(i / 3, j / 3)], imp.x_mutual[(i / 3, j / 3)])
                };
                assert_relative_eq!(r3[(i, j)], rr, epsilon = 1e-10);
                assert_relative_eq!(x3[(i, j)], xx, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_mutual_reduces_to_single_phase() {
        let net = feeder(c(0.0, 0.0));
        let imp = net.equivalent_impedance().unwrap();
        assert!(imp.r_mutual.norm() < 1e-12);
        let (_, pos) = net.sequence_networks().unwrap();
        let (r, _) = pos.equivalent_impedance().unwrap();
        assert_relative_eq!(imp.r_self, r, epsilon = 1e-12);
    }

    #[test]
    fn balanced_loads_give_identical_phases() {
        let net = feeder(c(0.2, 0.0));
        let loads = vec![vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2e3, 5e2), c(2e3, 5e2), c(2e3, 5e2), c(1e3, 1e2), c(1e3, 1e2), c(1e3, 1e2), c(3e3, 0.0), c(3e3, 0.0), c(3e3, 0.0)]];
        let set = solve_three_phase_flow(&net, 400.0, &[0.0], &loads, &FlowOptions::default()).unwrap();
        for h in 0..4 {
            assert_relative_eq!(set.phases[0].nodes[h].v_mag[0], set.phases[2].nodes[h].v_mag[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn misaligned_phases_are_rejected() {
        let net = feeder(c(0.2, 0.0));
        let loads = vec![vec![c(1e3, 0.0); 12]; 2];
        let set = solve_three_phase_flow(&net, 400.0, &[0.0, 1.0], &loads, &FlowOptions::default()).unwrap();
        let mut phases = set.phases.clone();
        phases[1] = phases[1].slice(0..1);
        assert!(ThreePhaseMeasurementSet::new(phases).is_err());
    }
}
