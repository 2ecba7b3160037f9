//! Line and network electrical parameters and the exact maps between the
//! impedance and admittance representations.
//!
//! Sign convention: a series element with resistance `r ≥ 0` and inductive
//! reactance `x ≥ 0` has conductance `g ≥ 0` and susceptance `b ≤ 0`, so the
//! X/R ratio is `ρ = x/r = -b/g ≥ 0`. The sign of the imaginary part flips
//! between the two domains; inverting the real and imaginary parts separately
//! does not give the other representation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};
use crate::linalg::{self, pseudo_inverse, DEFAULT_RANK_TOL};

/// Impedance `(r, x)` of a series admittance `g + jb`.
pub fn rx_from_gb(g: f64, b: f64) -> Result<(f64, f64)> {
    let d = g * g + b * b;
    if !d.is_finite() {
        return Err(GridError::Input(format!("non-finite admittance ({g}, {b})")));
    }
    if d == 0.0 {
        return Err(GridError::Domain("zero admittance: line absent".into()));
    }
    Ok((g / d, -b / d))
}

/// Admittance `(g, b)` of a series impedance `r + jx`.
pub fn gb_from_rx(r: f64, x: f64) -> Result<(f64, f64)> {
    let d = r * r + x * x;
    if !d.is_finite() {
        return Err(GridError::Input(format!("non-finite impedance ({r}, {x})")));
    }
    if d == 0.0 {
        return Err(GridError::Domain("zero impedance".into()));
    }
    Ok((r / d, -x / d))
}

/// Lumped-π model of one line: series admittance plus a total shunt admittance
/// split equally between both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinePiModel {
    pub g: f64,
    pub b: f64,
    #[serde(default)]
    pub shunt_y: Complex64,
}

impl LinePiModel {
    pub fn new(g: f64, b: f64) -> Self {
        Self { g, b, shunt_y: Complex64::new(0.0, 0.0) }
    }

    pub fn from_impedance(r: f64, x: f64) -> Result<Self> {
        let (g, b) = gb_from_rx(r, x)?;
        Ok(Self::new(g, b))
    }

    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }

    pub fn impedance(&self) -> Result<Complex64> {
        let (r, x) = rx_from_gb(self.g, self.b)?;
        Ok(Complex64::new(r, x))
    }

    pub fn r(&self) -> Result<f64> {
        Ok(rx_from_gb(self.g, self.b)?.0)
    }

    pub fn x(&self) -> Result<f64> {
        Ok(rx_from_gb(self.g, self.b)?.1)
    }

    /// X/R ratio `-b/g`.
    pub fn rho(&self) -> Result<f64> {
        if self.g == 0.0 {
            return Err(GridError::Domain("X/R ratio undefined for g = 0".into()));
        }
        Ok(-self.b / self.g)
    }
}

/// One series branch between two nodes (indices into the node list).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub line: LinePiModel,
}

/// Dense n-node admittance structure `Y = G + jB`.
///
/// `Y` follows the Kirchhoff convention `i = Y v`: off-diagonal entries are
/// `-y_hk` and the diagonal holds the sum of the incident series admittances
/// plus the nodal shunt. With zero shunts `G·1 = B·1 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    names: Vec<String>,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
    branches: Vec<Branch>,
    slack: usize,
}

impl NetworkModel {
    /// Assemble from a branch list. Shunts are `(node, y_shunt)` pairs added on
    /// top of the half line-charging of every branch.
    pub fn from_branches(
        names: Vec<String>,
        branches: Vec<Branch>,
        shunts: &[(usize, Complex64)],
        slack: usize,
    ) -> Result<Self> {
        let n = names.len();
        if n < 2 {
            return Err(GridError::Model("a network needs at least two nodes".into()));
        }
        if slack >= n {
            return Err(GridError::Model(format!("slack index {slack} out of range")));
        }
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        for br in &branches {
            if br.from >= n || br.to >= n || br.from == br.to {
                return Err(GridError::Model(format!(
                    "invalid branch {} -> {}",
                    br.from, br.to
                )));
            }
            let ys = br.line.admittance();
            if ys.norm() == 0.0 {
                return Err(GridError::Domain(format!(
                    "branch {} -> {} has zero admittance",
                    br.from, br.to
                )));
            }
            let (h, k) = (br.from, br.to);
            y[(h, h)] += ys + br.line.shunt_y / 2.0;
            y[(k, k)] += ys + br.line.shunt_y / 2.0;
            y[(h, k)] -= ys;
            y[(k, h)] -= ys;
        }
        for &(node, ysh) in shunts {
            if node >= n {
                return Err(GridError::Model(format!("shunt on unknown node {node}")));
            }
            y[(node, node)] += ysh;
        }
        let g = y.map(|c| c.re);
        let b = y.map(|c| c.im);
        let net = Self { names, g, b, branches, slack };
        if !net.is_connected() {
            return Err(GridError::Model("network graph is not connected".into()));
        }
        Ok(net)
    }

    /// Wrap explicit conductance and susceptance matrices. Monitored branches
    /// are derived from the nonzero off-diagonal pattern.
    pub fn from_matrices(g: DMatrix<f64>, b: DMatrix<f64>, slack: usize) -> Result<Self> {
        let n = g.nrows();
        if g.shape() != (n, n) || b.shape() != (n, n) {
            return Err(GridError::Model("G and B must be square and of equal size".into()));
        }
        if g.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GridError::Input("non-finite admittance matrix".into()));
        }
        let scale = g.norm().max(b.norm());
        if linalg::relative_asymmetry(&g) > 1e-12 || linalg::relative_asymmetry(&b) > 1e-12 {
            return Err(GridError::Model("G and B must be symmetric".into()));
        }
        let mut branches = Vec::new();
        for h in 0..n {
            for k in h + 1..n {
                let (gh, bh) = (-g[(h, k)], -b[(h, k)]);
                if gh.hypot(bh) > 1e-14 * scale {
                    branches.push(Branch { from: h, to: k, line: LinePiModel::new(gh, bh) });
                }
            }
        }
        let names = (0..n).map(|i| format!("n{i}")).collect();
        let net = Self { names, g, b, branches, slack };
        if slack >= n {
            return Err(GridError::Model(format!("slack index {slack} out of range")));
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn conductance(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn susceptance(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn admittance(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n(), self.n(), |i, j| Complex64::new(self.g[(i, j)], self.b[(i, j)]))
    }

    /// True when every row of `G` and `B` sums to zero (no shunt elements).
    pub fn has_zero_shunts(&self) -> bool {
        let scale = self.g.norm().max(self.b.norm()).max(f64::MIN_POSITIVE);
        (0..self.n()).all(|i| {
            self.g.row(i).sum().abs() <= 1e-12 * scale && self.b.row(i).sum().abs() <= 1e-12 * scale
        })
    }

    /// Equivalent impedance matrices `(R, X)`.
    pub fn equivalent_impedance(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        network_rx_from_gb(&self.g, &self.b)
    }

    /// The mean-removal projector with the null space of `G` and `B`.
    pub fn centering(&self) -> DMatrix<f64> {
        linalg::centering_matrix(self.n())
    }

    fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(h) = stack.pop() {
            for k in 0..n {
                if !seen[k] && (self.g[(h, k)] != 0.0 || self.b[(h, k)] != 0.0) {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn is_zero(a: &DMatrix<f64>) -> bool {
    a.iter().all(|&v| v == 0.0)
}

/// Check that two symmetric matrices share their null space; a zero matrix
/// is compatible with anything.
fn check_same_null_space(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if is_zero(a) || is_zero(b) {
        return Ok(());
    }
    let ra = linalg::numerical_rank(a, DEFAULT_RANK_TOL);
    let rb = linalg::numerical_rank(b, DEFAULT_RANK_TOL);
    if ra != rb {
        return Err(GridError::Model(format!(
            "{what}: rank mismatch ({ra} vs {rb}), null spaces differ"
        )));
    }
    let pa = linalg::range_projector(a, DEFAULT_RANK_TOL)?;
    let pb = linalg::range_projector(b, DEFAULT_RANK_TOL)?;
    let gap = (&pa - &pb).norm();
    if gap > 1e-6 {
        return Err(GridError::Model(format!(
            "{what}: null spaces differ (projector gap {gap:e})"
        )));
    }
    Ok(())
}

/// `R = (G + B G† B)†`, `X = -(B + G B† G)†`.
pub fn network_rx_from_gb(
    g: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_same_null_space(g, b, "G/B")?;
    let tol = DEFAULT_RANK_TOL;
    let r = if is_zero(g) {
        DMatrix::zeros(g.nrows(), g.ncols())
    } else {
        let g_pinv = pseudo_inverse(g, tol)?;
        pseudo_inverse(&(g + b * &g_pinv * b), tol)?
    };
    let x = if is_zero(b) {
        DMatrix::zeros(b.nrows(), b.ncols())
    } else {
        let b_pinv = pseudo_inverse(b, tol)?;
        -pseudo_inverse(&(b + g * &b_pinv * g), tol)?
    };
    Ok((r, x))
}

/// Inverse of [`network_rx_from_gb`]: `G = (R + X R† X)†`, `B = -(X + R X† R)†`.
pub fn network_gb_from_rx(
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_same_null_space(r, x, "R/X")?;
    let tol = DEFAULT_RANK_TOL;
    let g = if is_zero(r) {
        DMatrix::zeros(r.nrows(), r.ncols())
    } else {
        let r_pinv = pseudo_inverse(r, tol)?;
        pseudo_inverse(&(r + x * &r_pinv * x), tol)?
    };
    let b = if is_zero(x) {
        DMatrix::zeros(x.nrows(), x.ncols())
    } else {
        let x_pinv = pseudo_inverse(x, tol)?;
        -pseudo_inverse(&(x + r * &x_pinv * r), tol)?
    };
    Ok((g, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{centering_matrix, relative_frobenius_error};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn path_laplacian(n: usize) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(n, n);
        for h in 0..n - 1 {
            l[(h, h)] += 1.0;
            l[(h + 1, h + 1)] += 1.0;
            l[(h, h + 1)] -= 1.0;
            l[(h + 1, h)] -= 1.0;
        }
        l
    }

    fn two_node(g: f64, b: f64) -> NetworkModel {
        NetworkModel::from_branches(
            vec!["h".into(), "k".into()],
            vec![Branch { from: 0, to: 1, line: LinePiModel::new(g, b) }],
            &[],
            0,
        )
        .unwrap()
    }

    #[test]
    fn rx_of_reference_line_matches_complex_reciprocal() {
        let (r, x) = rx_from_gb(10.0, -0.5).unwrap();
        let z = Complex64::new(1.0, 0.0) / Complex64::new(10.0, -0.5);
        assert_relative_eq!(r, z.re, max_relative = 1e-15);
        assert_relative_eq!(x, z.im, max_relative = 1e-15);
        assert_relative_eq!(r, 0.099_750_623_441_396_5, max_relative = 1e-12);
        assert_relative_eq!(x, 0.004_987_531_172_069_825, max_relative = 1e-12);
    }

    #[test]
    fn rx_trivial_cases() {
        assert_eq!(rx_from_gb(10.0, 0.0).unwrap(), (0.1, 0.0));
        assert_eq!(rx_from_gb(0.0, -2.0).unwrap(), (0.0, 0.5));
        assert!(matches!(rx_from_gb(0.0, 0.0), Err(GridError::Domain(_))));
    }

    #[test]
    fn gb_trivial_cases() {
        let (g, b) = gb_from_rx(0.1, 0.0).unwrap();
        assert_relative_eq!(g, 10.0, max_relative = 1e-15);
        assert_eq!(b, 0.0);
        let (g, b) = gb_from_rx(1.0, 1.0).unwrap();
        assert_relative_eq!(g, 0.5);
        assert_relative_eq!(b, -0.5);
        let (r, x) = rx_from_gb(10.0, -0.5).unwrap();
        let (g, b) = gb_from_rx(r, x).unwrap();
        assert_relative_eq!(g, 10.0, max_relative = 1e-14);
        assert_relative_eq!(b, -0.5, max_relative = 1e-14);
        assert!(matches!(gb_from_rx(0.0, 0.0), Err(GridError::Domain(_))));
    }

    #[test]
    fn line_model_ratio_and_signs() {
        let line = LinePiModel::new(10.0, -0.5);
        let rho = line.rho().unwrap();
        assert_relative_eq!(rho, 0.05);
        assert_relative_eq!(line.x().unwrap() / line.r().unwrap(), rho, max_relative = 1e-14);
        assert!(line.r().unwrap() >= 0.0 && line.x().unwrap() >= 0.0);
        let zero = LinePiModel::new(0.0, 0.0);
        assert!(zero.impedance().is_err());
    }

    #[test]
    fn two_node_equivalent_impedance_is_scaled_laplacian_pinv() {
        let net = two_node(10.0, -0.5);
        let (r, x) = net.equivalent_impedance().unwrap();
        let (rs, xs) = rx_from_gb(10.0, -0.5).unwrap();
        let l = path_laplacian(2);
        let l_pinv = pseudo_inverse(&l, DEFAULT_RANK_TOL).unwrap();
        assert_relative_eq!(r, &l_pinv * rs, epsilon = 1e-14);
        assert_relative_eq!(x, &l_pinv * xs, epsilon = 1e-14);
    }

    #[test]
    fn purely_resistive_network() {
        let g = path_laplacian(4) * 3.0;
        let b = DMatrix::zeros(4, 4);
        let (r, x) = network_rx_from_gb(&g, &b).unwrap();
        assert_relative_eq!(r, pseudo_inverse(&g, DEFAULT_RANK_TOL).unwrap(), epsilon = 1e-12);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn null_space_mismatch_is_rejected() {
        let g = path_laplacian(3);
        let b = -DMatrix::<f64>::identity(3, 3);
        assert!(matches!(network_rx_from_gb(&g, &b), Err(GridError::Model(_))));
    }

    #[test]
    fn zero_shunt_network_structure() {
        let names = (0..4).map(|i| format!("n{i}")).collect();
        let branches = vec![
            Branch { from: 0, to: 1, line: LinePiModel::new(10.0, -0.5) },
            Branch { from: 1, to: 2, line: LinePiModel::new(8.0, -0.7) },
            Branch { from: 1, to: 3, line: LinePiModel::new(12.0, -0.4) },
        ];
        let net = NetworkModel::from_branches(names, branches, &[], 0).unwrap();
        assert!(net.has_zero_shunts());
        let (g, b) = (net.conductance(), net.susceptance());
        assert_relative_eq!(g.clone(), g.transpose());
        assert_eq!(linalg::numerical_rank(g, DEFAULT_RANK_TOL), 3);
        assert_eq!(linalg::numerical_rank(b, DEFAULT_RANK_TOL), 3);
        let ones = nalgebra::DVector::from_element(4, 1.0);
        assert!((g * &ones).norm() < 1e-12 && (b * &ones).norm() < 1e-12);
    }

    #[test]
    fn centering_identity_holds_only_for_negative_off_diagonal() {
        let names = (0..3).map(|i| format!("n{i}")).collect();
        let branches = vec![
            Branch { from: 0, to: 1, line: LinePiModel::new(10.0, -0.5) },
            Branch { from: 1, to: 2, line: LinePiModel::new(6.0, -0.9) },
        ];
        let net = NetworkModel::from_branches(names, branches, &[], 0).unwrap();
        let (g, b) = (net.conductance(), net.susceptance());
        let m = g + b * pseudo_inverse(g, DEFAULT_RANK_TOL).unwrap() * b;
        let proj = pseudo_inverse(&m, DEFAULT_RANK_TOL).unwrap() * &m;
        let o = net.centering();
        assert_relative_eq!(&o * &proj, o.clone(), epsilon = 1e-10);
        // Off-diagonal +1/n fails the same identity.
        let mut o_plus = DMatrix::from_element(3, 3, 1.0 / 3.0);
        for i in 0..3 {
            o_plus[(i, i)] = 2.0 / 3.0;
        }
        assert!((&o_plus * &proj - &o_plus).norm() > 0.1);
        assert_relative_eq!(o, centering_matrix(3));
    }

    fn random_network(seed: u64, n: usize) -> NetworkModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut branches = Vec::new();
        for k in 1..n {
            let h = rng.random_range(0..k);
            let g = rng.random_range(2.0..20.0);
            let b = -rng.random_range(0.1..4.0);
            branches.push(Branch { from: h, to: k, line: LinePiModel::new(g, b) });
        }
        // One extra chord makes the graph meshed.
        if n > 3 {
            branches.push(Branch { from: 0, to: n - 1, line: LinePiModel::new(5.0, -1.0) });
        }
        let names = (0..n).map(|i| format!("n{i}")).collect();
        NetworkModel::from_branches(names, branches, &[], 0).unwrap()
    }

    #[test]
    fn six_node_round_trip() {
        let net = random_network(7, 6);
        let (r, x) = net.equivalent_impedance().unwrap();
        let (g, b) = network_gb_from_rx(&r, &x).unwrap();
        assert!(relative_frobenius_error(&g, net.conductance()) < 1e-8);
        assert!(relative_frobenius_error(&b, net.susceptance()) < 1e-8);
    }

    proptest! {
        #[test]
        fn scalar_round_trip(g in -50.0f64..50.0, b in -50.0f64..50.0) {
            prop_assume!(g.hypot(b) > 1e-6);
            let (r, x) = rx_from_gb(g, b).unwrap();
            let (g2, b2) = gb_from_rx(r, x).unwrap();
            let scale = g.hypot(b);
            prop_assert!((g2 - g).abs() <= 1e-12 * scale);
            prop_assert!((b2 - b).abs() <= 1e-12 * scale);
            if g.abs() > 1e-6 && r.abs() > 1e-12 {
                prop_assert!((x / r - (-b / g)).abs() <= 1e-9 * (1.0 + (b / g).abs()));
            }
        }

        #[test]
        fn network_round_trip(seed in 0u64..10_000, n in 2usize..8) {
            let net = random_network(seed, n);
            let (r, x) = net.equivalent_impedance().unwrap();
            let (g, b) = network_gb_from_rx(&r, &x).unwrap();
            prop_assert!(relative_frobenius_error(&g, net.conductance()) < 1e-8);
            prop_assert!(relative_frobenius_error(&b, net.susceptance()) < 1e-8);
        }
    }
}
