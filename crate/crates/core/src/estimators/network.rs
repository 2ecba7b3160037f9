//! Network estimators on nodal injections.
//!
//! The network matrices share the null space spanned by the ones vector, so
//! every regression runs in the reduced coordinates `Pᵀ(·)` of an
//! orthonormal basis `P` of its complement (`P Pᵀ = O`). A fitted reduced
//! block `M_r` maps back to `P M_rᵀ Pᵀ` (rows are samples, so the
//! coefficient is the transpose).

use nalgebra::DMatrix;

use super::{EstimateReport, EstimatorOptions, Flag, Method};
use crate::error::{GridError, Result};
use crate::grid::network_gb_from_rx;
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::measurement::MeasurementSet;
use crate::regression::{fit, Fit, RegressionProblem};

/// Centered nodal series in reduced coordinates plus their noise blocks.
pub(super) struct Reduced {
    pub p: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
    /// Noise covariances of one sample of `re`, `im`, their cross term and `v`.
    pub s_rr: DMatrix<f64>,
    pub s_ii: DMatrix<f64>,
    pub s_ri: DMatrix<f64>,
    pub s_v: DMatrix<f64>,
    /// Mean correlation of the real and imaginary current noise.
    pub noise_correlation: f64,
}

pub(super) fn reduce(data: &MeasurementSet, opts: &EstimatorOptions) -> Result<Reduced> {
    opts.validate()?;
    let n = data.nodes.len();
    if n < 2 {
        return Err(GridError::Input("a network needs at least two nodes".into()));
    }
    let q = n - 1;
    if data.len() <= 2 * q {
        return Err(GridError::Input(format!("{} samples are too few for {n} nodes", data.len())));
    }
    let nd = data.nodal_data();
    let p = linalg::ones_complement_basis(n);
    let noise = opts.noise.block_averaged(data.block_size);
    let mut d11 = Vec::with_capacity(n);
    let mut d22 = Vec::with_capacity(n);
    let mut d12 = Vec::with_capacity(n);
    let mut corr = 0.0;
    for h in 0..n {
        let i: Vec<f64> = nd.i_mag.column(h).iter().copied().collect();
        let phi: Vec<f64> = nd.phi.column(h).iter().copied().collect();
        let s = noise.current_covariance(&i, &phi);
        d11.push(s[(0, 0)]);
        d22.push(s[(1, 1)]);
        d12.push(s[(0, 1)]);
        let den = (s[(0, 0)] * s[(1, 1)]).sqrt();
        if den > 0.0 {
            corr += s[(0, 1)].abs() / den / n as f64;
        }
    }
    let sandwich = |d: &[f64]| p.transpose() * DMatrix::from_diagonal(&linalg::to_vector(d)) * &p;
    Ok(Reduced {
        v: linalg::center_columns(&nd.v_mag) * &p,
        re: linalg::center_columns(&nd.i_re) * &p,
        im: linalg::center_columns(&nd.i_im) * &p,
        s_rr: sandwich(&d11),
        s_ii: sandwich(&d22),
        s_ri: sandwich(&d12),
        s_v: DMatrix::identity(q, q) * noise.voltage_variance(),
        noise_correlation: corr,
        p,
    })
}

/// Assemble a block matrix from `k × k` blocks of equal size `q`.
pub(super) fn blocks(grid: &[Vec<Option<&DMatrix<f64>>>], q: usize) -> DMatrix<f64> {
    let k = grid.len();
    let mut out = DMatrix::zeros(k * q, k * q);
    for (i, row) in grid.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            if let Some(b) = b {
                out.view_mut((i * q, j * q), (q, q)).copy_from(b);
            }
        }
    }
    out
}

/// Row-stack matrices with the same number of columns.
pub(super) fn vstack(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.rows_mut(at, m.nrows()).copy_from(m);
        at += m.nrows();
    }
    out
}

/// Column-stack matrices with the same number of rows.
pub(super) fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.columns_mut(at, m.ncols()).copy_from(m);
        at += m.ncols();
    }
    out
}

/// Map the `i`-th `q × q` coefficient block back to full coordinates.
pub(super) fn lift(coef: &DMatrix<f64>, i: usize, p: &DMatrix<f64>) -> DMatrix<f64> {
    let q = p.ncols();
    let block = coef.rows(i * q, q).transpose();
    p * block * p.transpose()
}

fn network_report(method: Method, data: &MeasurementSet, opts: &EstimatorOptions, f: &Fit) -> EstimateReport {
    let mut r = EstimateReport::new(method, opts.engine);
    r.absorb_fit(f);
    if data.small_angle_violation {
        r.flag(Flag::SmallAngleViolation);
    }
    r
}

/// Impedance model `O|V| = R I^ℜ + X I^ℑ` fitted as one multi-response
/// problem; `(G, B)` follow from the inverse map. `R` and `X` are
/// symmetrised; their relative asymmetry before that is reported.
pub fn estimate_network_impedance(data: &MeasurementSet, opts: &EstimatorOptions) -> Result<EstimateReport> {
    let red = reduce(data, opts)?;
    let q = red.p.ncols();
    let cov = blocks(
        &[
            vec![Some(&red.s_rr), Some(&red.s_ri), None],
            vec![Some(&red.s_ri), Some(&red.s_ii), None],
            vec![None, None, Some(&red.s_v)],
        ],
        q,
    );
    let problem = RegressionProblem::new(red.v.clone(), hstack(&[&red.re, &red.im])).with_noise_cov(cov);
    let f = fit(&problem, opts.engine)?;
    let mut r = network_report(Method::NetworkImpedance, data, opts, &f);
    let (r_raw, x_raw) = (lift(&f.coef, 0, &red.p), lift(&f.coef, 1, &red.p));
    r.diagnostics.insert("asymmetry_r".into(), linalg::relative_asymmetry(&r_raw));
    r.diagnostics.insert("asymmetry_x".into(), linalg::relative_asymmetry(&x_raw));
    let (rm, xm) = (linalg::symmetrize(&r_raw), linalg::symmetrize(&x_raw));
    r.set_matrix("R", &rm);
    r.set_matrix("X", &xm);
    match network_gb_from_rx(&rm, &xm) {
        Ok((g, b)) if g.iter().chain(b.iter()).all(|v| v.is_finite()) => {
            r.set_matrix("G", &g);
            r.set_matrix("B", &b);
        }
        Ok(_) => {
            r.flag(Flag::Diverged);
            r.converged = false;
        }
        Err(e) => {
            r.flag(Flag::VariantFailed);
            r.notes.push(format!("no admittance view: {e}"));
        }
    }
    Ok(r)
}

/// Reduced model `(G + B G† B)|V| = I^ℜ - B G† I^ℑ`: regress `|V|` and
/// `I^ℑ` onto `I^ℜ` for `M₁ = G + B G† B` and `M₂ = B G†`, then
/// `G = (O + M₂²)† M₁` and `B = M₂ G`. The regressor `I^ℑ` and the response
/// `I^ℜ` carry correlated noise whenever the power angle is nonzero; that
/// correlation is not modelled and is flagged.
pub fn estimate_network_reduced(data: &MeasurementSet, opts: &EstimatorOptions) -> Result<EstimateReport> {
    let red = reduce(data, opts)?;
    let n = red.p.nrows();
    let q = n - 1;
    let cov = blocks(
        &[
            vec![Some(&red.s_v), None, None],
            vec![None, Some(&red.s_ii), None],
            vec![None, None, Some(&red.s_rr)],
        ],
        q,
    );
    let problem = RegressionProblem::new(red.re.clone(), hstack(&[&red.v, &red.im])).with_noise_cov(cov);
    let f = fit(&problem, opts.engine)?;
    let mut r = network_report(Method::NetworkReduced, data, opts, &f);
    r.diagnostics.insert("current_noise_correlation".into(), red.noise_correlation);
    if red.noise_correlation > 1e-3 {
        r.flag(Flag::CurrentCorrelationHazard);
    }
    let (m1, m2) = (lift(&f.coef, 0, &red.p), lift(&f.coef, 1, &red.p));
    let rank = linalg::numerical_rank(&m1, DEFAULT_RANK_TOL);
    if rank != q {
        return Err(GridError::Model(format!("fitted M1 has rank {rank}, expected {q}")));
    }
    let o = linalg::centering_matrix(n);
    let g = linalg::pseudo_inverse(&(&o + &m2 * &m2), DEFAULT_RANK_TOL)? * &m1;
    let b = &m2 * &g;
    r.diagnostics.insert("asymmetry_g".into(), linalg::relative_asymmetry(&g));
    r.diagnostics.insert("asymmetry_b".into(), linalg::relative_asymmetry(&b));
    r.set_matrix("M1", &m1);
    r.set_matrix("M2", &m2);
    if g.iter().chain(b.iter()).all(|v| v.is_finite()) {
        r.set_matrix("G", &linalg::symmetrize(&g));
        r.set_matrix("B", &linalg::symmetrize(&b));
    } else {
        r.flag(Flag::Diverged);
        r.converged = false;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate_line_impedance;
    use crate::grid::{Branch, LinePiModel, NetworkModel};
    use crate::linalg::relative_frobenius_error;
    use crate::measurement::{self, LineChannels, NodeChannels};
    use crate::noise::NoiseModel;
    use crate::synth::{self, FlowOptions, ProfileGenerator};
    use approx::assert_relative_eq;

    pub(crate) fn six_node(b_scale: f64) -> NetworkModel {
        let names: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let ys = [(0, 1, 8.0, -4.0), (1, 2, 6.0, -2.5), (1, 3, 5.0, -3.0), (3, 4, 9.0, -1.5), (3, 5, 4.0, -2.0)];
        let branches = ys
            .iter()
            .map(|&(f, t, g, b)| Branch { from: f, to: t, line: LinePiModel::new(g, b * b_scale) })
            .collect();
        NetworkModel::from_branches(names, branches, &[], 0).unwrap()
    }

    /// Light loads keep the linearisation error far below the tolerances.
    pub(crate) fn light_network_data(net: &NetworkModel, n: usize, seed: u64) -> MeasurementSet {
        let names: Vec<String> = net.names().to_vec();
        let prof = ProfileGenerator { samples: n, mean_p: 10.0, mean_q: 3.0, ..Default::default() }.generate(&names, seed).unwrap();
        let loads = prof.per_timestamp(&names);
        synth::solve_network_flow(net, 16e3, &prof.timestamps, &loads, &FlowOptions::default()).unwrap()
    }

    fn exact() -> EstimatorOptions {
        EstimatorOptions::default().with_noise(NoiseModel::zero())
    }

    #[test]
    fn impedance_model_recovers_six_node_network() {
        let net = six_node(1.0);
        let set = measurement::center(&light_network_data(&net, 300, 1));
        let rep = estimate_network_impedance(&set, &exact()).unwrap();
        let (r, x) = net.equivalent_impedance().unwrap();
        assert!(relative_frobenius_error(&rep.matrix("R").unwrap(), &r) < 1e-6);
        assert!(relative_frobenius_error(&rep.matrix("X").unwrap(), &x) < 1e-6);
        assert!(relative_frobenius_error(&rep.matrix("G").unwrap(), net.conductance()) < 1e-6);
        assert!(relative_frobenius_error(&rep.matrix("B").unwrap(), net.susceptance()) < 1e-6);
        assert!(rep.diagnostics["asymmetry_r"] < 1e-6);
    }

    #[test]
    fn reduced_model_recovers_six_node_network() {
        let net = six_node(1.0);
        let set = measurement::center(&light_network_data(&net, 300, 2));
        let rep = estimate_network_reduced(&set, &exact()).unwrap();
        assert!(relative_frobenius_error(&rep.matrix("G").unwrap(), net.conductance()) < 1e-6);
        assert!(relative_frobenius_error(&rep.matrix("B").unwrap(), net.susceptance()) < 1e-6);
        assert!(!rep.has_flag(Flag::CurrentCorrelationHazard));
    }

    #[test]
    fn purely_resistive_network_has_no_m2() {
        let net = six_node(0.0);
        let set = measurement::center(&light_network_data(&net, 300, 3));
        let rep = estimate_network_reduced(&set, &exact()).unwrap();
        assert!(rep.matrix("M2").unwrap().norm() < 1e-8 * rep.matrix("M1").unwrap().norm());
        assert!(relative_frobenius_error(&rep.matrix("G").unwrap(), net.conductance()) < 1e-6);
    }

    #[test]
    fn hazard_is_flagged_under_correlated_noise() {
        let net = six_node(1.0);
        let set = measurement::center(&light_network_data(&net, 300, 4));
        let opts = EstimatorOptions::default().with_noise(NoiseModel::new(1e-3, 0.05, 0.05).unwrap());
        let rep = estimate_network_reduced(&set, &opts).unwrap();
        assert!(rep.has_flag(Flag::CurrentCorrelationHazard));
    }

    #[test]
    fn two_node_network_matches_the_line_method() {
        // Exact linear data: node currents are ±(c + js) in the node frames.
        let n = 80;
        let (g, b) = (7.0, -3.0);
        let dv: Vec<f64> = (0..n).map(|t| (t as f64 * 0.4).sin() + 0.5 * (t as f64 * 0.13).cos()).collect();
        let e: Vec<f64> = (0..n).map(|t| 0.02 * (t as f64 * 0.9).cos()).collect();
        let c: Vec<f64> = (0..n).map(|t| g * dv[t] - b * e[t]).collect();
        let s: Vec<f64> = (0..n).map(|t| -g * e[t] - b * dv[t]).collect();
        let polar = |sign: f64| -> (Vec<f64>, Vec<f64>) {
            c.iter().zip(&s).map(|(c, s)| (c.hypot(*s), (sign * s).atan2(sign * c))).unzip()
        };
        let ((ih, ph), (ik, pk)) = (polar(1.0), polar(-1.0));
        let vk: Vec<f64> = dv.iter().map(|d| 400.0 - d).collect();
        let nodes = vec![
            NodeChannels { name: "h".into(), v_mag: vec![400.0; n], i_mag: ih.clone(), phi: ph.clone() },
            NodeChannels { name: "k".into(), v_mag: vk, i_mag: ik, phi: pk },
        ];
        let lines = vec![LineChannels { from: 0, to: 1, i_mag: ih, phi: ph }];
        let set = MeasurementSet::new((0..n).map(|t| t as f64).collect(), nodes, lines).unwrap();
        let net = estimate_network_impedance(&set, &exact()).unwrap();
        let line = estimate_line_impedance(&set, (0, 1), &exact()).unwrap();
        let gm = net.matrix("G").unwrap();
        assert_relative_eq!(-gm[(0, 1)], line.scalar("g").unwrap(), max_relative = 1e-8);
        let bm = net.matrix("B").unwrap();
        assert_relative_eq!(-bm[(0, 1)], line.scalar("b").unwrap(), max_relative = 1e-8);
        assert_relative_eq!(4.0 * net.matrix("R").unwrap()[(0, 0)], line.scalar("r").unwrap(), max_relative = 1e-8);
    }

    #[test]
    fn power_flow_two_node_network_matches_line_closely() {
        let line = LinePiModel::new(10.0, -0.5);
        let net = NetworkModel::from_branches(vec!["h".into(), "k".into()], vec![Branch { from: 0, to: 1, line }], &[], 0).unwrap();
        let set = measurement::center(&light_network_data(&net, 200, 5));
        let rn = estimate_network_impedance(&set, &exact()).unwrap();
        assert_relative_eq!(-rn.matrix("G").unwrap()[(0, 1)], 10.0, max_relative = 1e-5);
    }
}
