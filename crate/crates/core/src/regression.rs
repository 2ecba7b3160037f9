//! Ordinary and total least squares for `Z ≈ X A` with noisy regressors.
//!
//! Rows are samples: `X` is `N × p`, `Z` is `N × m` and `A` is `p × m`.
//! The TLS engine is a generalized mixed LS-TLS: regressor columns without
//! noise are fitted exactly, the remaining columns are whitened with the
//! Cholesky factor of their noise covariance and the fit comes from the
//! smallest right singular vectors of the whitened data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};
use crate::linalg;

/// Condition number above which the regressors are treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Ols,
    Tls,
    /// TLS, falling back to OLS when the TLS problem is degenerate.
    TlsFallback,
}

impl std::str::FromStr for Engine {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Engine::Ols),
            "tls" => Ok(Engine::Tls),
            "tls-fallback" => Ok(Engine::TlsFallback),
            other => Err(GridError::Input(format!("unknown engine '{other}' (ols, tls, tls-fallback)"))),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Ols => "ols",
            Engine::Tls => "tls",
            Engine::TlsFallback => "tls-fallback",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionProblem {
    pub lhs: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
    /// Per-row noise covariance of `[rhs | lhs]`. `None` means noise-free
    /// regressors.
    pub noise_cov: Option<DMatrix<f64>>,
    /// Row indices where a new dataset starts (the first starts at 0).
    pub dataset_starts: Vec<usize>,
    /// Subtract each dataset's column means before fitting.
    pub center: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    /// `p × m` coefficients.
    pub coef: DMatrix<f64>,
    pub engine: Engine,
    /// True when a TLS request was answered with OLS.
    pub fell_back: bool,
    /// Singular values of the (whitened, noisy part of the) data matrix.
    pub singular_values: Vec<f64>,
    /// Smallest retained over largest discarded singular value.
    pub snr: f64,
    pub condition: f64,
    /// `‖Z - X A‖ / ‖Z‖` on the fitted rows.
    pub relative_residual: f64,
}

impl RegressionProblem {
    pub fn new(lhs: DMatrix<f64>, rhs: DMatrix<f64>) -> Self {
        Self { lhs, rhs, noise_cov: None, dataset_starts: Vec::new(), center: true }
    }

    /// Build from column series.
    pub fn from_columns(lhs: &[&[f64]], rhs: &[&[f64]]) -> Self {
        Self::new(linalg::columns_to_matrix(lhs), linalg::columns_to_matrix(rhs))
    }

    pub fn with_noise_cov(mut self, cov: DMatrix<f64>) -> Self {
        self.noise_cov = Some(cov);
        self
    }

    /// Independent noise with the given standard deviation per column of
    /// `[rhs | lhs]`.
    pub fn with_noise_scale(self, scale: &[f64]) -> Self {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(scale.len(), scale.iter().map(|s| s * s)));
        self.with_noise_cov(d)
    }

    pub fn with_datasets(mut self, starts: Vec<usize>) -> Self {
        self.dataset_starts = starts;
        self
    }

    pub fn uncentered(mut self) -> Self {
        self.center = false;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.lhs.nrows()
    }

    fn validate(&self) -> Result<()> {
        let (n, p, m) = (self.lhs.nrows(), self.rhs.ncols(), self.lhs.ncols());
        if self.rhs.nrows() != n {
            return Err(GridError::Input("lhs and rhs have different numbers of rows".into()));
        }
        if p == 0 || m == 0 {
            return Err(GridError::Input("regression needs at least one regressor and one response".into()));
        }
        if n <= p {
            return Err(GridError::Input(format!("underdetermined regression: {n} samples for {p} regressors")));
        }
        if self.lhs.iter().chain(self.rhs.iter()).any(|v| !v.is_finite()) {
            return Err(GridError::Input("regression data contain non-finite values".into()));
        }
        if let Some(cov) = &self.noise_cov {
            if cov.shape() != (p + m, p + m) {
                return Err(GridError::Input(format!(
                    "noise covariance must be {0}×{0}, got {1}×{2}",
                    p + m,
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            if linalg::relative_asymmetry(cov) > 1e-10 || cov.iter().any(|v| !v.is_finite()) {
                return Err(GridError::Input("noise covariance must be finite and symmetric".into()));
            }
        }
        if self.dataset_starts.iter().any(|&s| s >= n) || self.dataset_starts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::Input("dataset boundaries must be increasing row indices".into()));
        }
        Ok(())
    }

    /// Stacked data `[rhs | lhs]`, centered per dataset when requested.
    fn data(&self) -> DMatrix<f64> {
        let (n, p, m) = (self.lhs.nrows(), self.rhs.ncols(), self.lhs.ncols());
        let mut c = DMatrix::zeros(n, p + m);
        c.columns_mut(0, p).copy_from(&self.rhs);
        c.columns_mut(p, m).copy_from(&self.lhs);
        if self.center {
            let mut bounds: Vec<usize> = std::iter::once(0).chain(self.dataset_starts.iter().copied().filter(|&s| s > 0)).collect();
            bounds.push(n);
            for w in bounds.windows(2) {
                let block = c.rows(w[0], w[1] - w[0]).clone_owned();
                c.rows_mut(w[0], w[1] - w[0]).copy_from(&linalg::center_columns(&block));
            }
        }
        c
    }
}

fn condition_of_triangular(r: &DMatrix<f64>) -> f64 {
    let s = r.clone().singular_values();
    let (max, min) = (s.max(), s.min());
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn relative_residual(x: &DMatrix<f64>, z: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let zn = z.norm();
    let r = (z - x * a).norm();
    if zn == 0.0 {
        r
    } else {
        r / zn
    }
}

/// Upper-triangular factor of a thin QR decomposition.
fn r_factor(c: &DMatrix<f64>) -> DMatrix<f64> {
    c.clone().qr().r()
}

/// Solve `R11 A = B` for upper-triangular `R11`.
fn solve_upper(r11: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    r11.solve_upper_triangular(b)
        .ok_or_else(|| GridError::Regression { message: "singular regressor block".into(), condition: f64::INFINITY })
}

/// Least squares `A = argmin ‖Z - X A‖`.
pub fn ols_fit(problem: &RegressionProblem) -> Result<Fit> {
    problem.validate()?;
    let p = problem.rhs.ncols();
    let m = problem.lhs.ncols();
    let c = problem.data();
    let r = r_factor(&c);
    let r11 = r.view((0, 0), (p, p)).clone_owned();
    let condition = condition_of_triangular(&r11);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(GridError::Regression {
            message: "regressors are rank deficient".into(),
            condition,
        });
    }
    let r12 = r.view((0, p), (p, m)).clone_owned();
    let coef = solve_upper(&r11, &r12)?;
    let x = c.columns(0, p).clone_owned();
    let z = c.columns(p, m).clone_owned();
    let sv = r.clone().singular_values();
    let mut svs: Vec<f64> = sv.iter().copied().collect();
    svs.sort_by(|a, b| b.total_cmp(a));
    let snr = if svs[p] > 0.0 { svs[p - 1] / svs[p] } else { f64::INFINITY };
    Ok(Fit {
        relative_residual: relative_residual(&x, &z, &coef),
        coef,
        engine: Engine::Ols,
        fell_back: false,
        singular_values: svs,
        snr,
        condition,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TlsOptions {
    /// Relative gap between the last retained and first discarded singular
    /// value below which the TLS solution is declared unstable.
    pub gap_tol: f64,
}

impl Default for TlsOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9 }
    }
}

/// Generalized mixed LS-TLS.
pub fn tls_fit(problem: &RegressionProblem, opts: &TlsOptions) -> Result<Fit> {
    problem.validate()?;
    let p = problem.rhs.ncols();
    let m = problem.lhs.ncols();
    let cov = match &problem.noise_cov {
        Some(c) => c.clone(),
        None => return ols_fit(problem),
    };
    // A PSD covariance with a zero diagonal entry has the whole row zero.
    let exact: Vec<usize> = (0..p).filter(|&j| cov[(j, j)] == 0.0).collect();
    let noisy: Vec<usize> = (0..p).filter(|j| !exact.contains(j)).collect();
    if noisy.is_empty() {
        return ols_fit(problem);
    }
    let (p1, p2) = (exact.len(), noisy.len());
    // Column order [exact regressors | noisy regressors | responses].
    let order: Vec<usize> = exact.iter().chain(noisy.iter()).copied().chain(p..p + m).collect();
    let c0 = problem.data();
    let c = DMatrix::from_fn(c0.nrows(), p + m, |i, j| c0[(i, order[j])]);
    let r = r_factor(&c);

    let k = p2 + m;
    let r22 = r.view((p1, p1), (k, k)).clone_owned();
    if c.nrows() < p + m {
        return Err(GridError::Input(format!("TLS needs at least {} samples, got {}", p + m, c.nrows())));
    }
    let mut s = DMatrix::from_fn(k, k, |i, j| cov[(order[p1 + i], order[p1 + j])]);
    // A noise-free response beside noisy regressors: give it a negligible
    // variance so the whitening exists; the fit approaches the exact limit.
    let jitter = 1e-12 * s.diagonal().max();
    for i in 0..k {
        if s[(i, i)] == 0.0 {
            s[(i, i)] = jitter;
        }
    }
    let chol = s.clone().cholesky().ok_or_else(|| GridError::Regression {
        message: "noise covariance of the noisy columns is not positive definite".into(),
        condition: f64::INFINITY,
    })?;
    let l = chol.l();
    // W = R22 L^{-T}: rows with identity noise covariance.
    let l_inv_t = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| GridError::Regression { message: "singular noise factor".into(), condition: f64::INFINITY })?
        .transpose();
    let w = &r22 * &l_inv_t;
    let svd = w.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let (keep, drop) = (sv[p2 - 1], sv[p2]);
    let gap = (keep - drop) / sv[0].max(f64::MIN_POSITIVE);
    if gap <= opts.gap_tol {
        return Err(GridError::TlsUnstable(format!(
            "no gap between retained and discarded singular values ({keep:.6e} vs {drop:.6e})"
        )));
    }
    let v2 = DMatrix::from_fn(k, m, |i, j| v_t[(idx[p2 + j], i)]);
    let y = &l_inv_t * v2;
    let yx = y.rows(0, p2).clone_owned();
    let yz = y.rows(p2, m).clone_owned();
    let yz_cond = condition_of_triangular(&yz);
    if !yz_cond.is_finite() || yz_cond > MAX_CONDITION {
        return Err(GridError::TlsUnstable("response block of the null space is singular".into()));
    }
    let yz_inv = yz.try_inverse().ok_or_else(|| GridError::TlsUnstable("singular response block".into()))?;
    let a2 = -(yx * yz_inv);

    let mut a_ord = DMatrix::zeros(p, m);
    let mut condition = yz_cond;
    if p1 > 0 {
        let r11 = r.view((0, 0), (p1, p1)).clone_owned();
        condition = condition.max(condition_of_triangular(&r11));
        if condition > MAX_CONDITION {
            return Err(GridError::Regression { message: "noise-free regressors are rank deficient".into(), condition });
        }
        let r12x = r.view((0, p1), (p1, p2)).clone_owned();
        let r12z = r.view((0, p1 + p2), (p1, m)).clone_owned();
        let a1 = solve_upper(&r11, &(r12z - r12x * &a2))?;
        a_ord.rows_mut(0, p1).copy_from(&a1);
    }
    a_ord.rows_mut(p1, p2).copy_from(&a2);
    let mut coef = DMatrix::zeros(p, m);
    for (pos, &col) in exact.iter().chain(noisy.iter()).enumerate() {
        coef.row_mut(col).copy_from(&a_ord.row(pos));
    }
    let x = c0.columns(0, p).clone_owned();
    let z = c0.columns(p, m).clone_owned();
    Ok(Fit {
        relative_residual: relative_residual(&x, &z, &coef),
        coef,
        engine: Engine::Tls,
        fell_back: false,
        snr: if drop > 0.0 { keep / drop } else { f64::INFINITY },
        singular_values: sv,
        condition,
    })
}

/// Dispatch on the engine. The fallback variant answers degenerate TLS
/// problems with OLS and marks the fit.
pub fn fit(problem: &RegressionProblem, engine: Engine) -> Result<Fit> {
    match engine {
        Engine::Ols => ols_fit(problem),
        Engine::Tls => tls_fit(problem, &TlsOptions::default()),
        Engine::TlsFallback => match tls_fit(problem, &TlsOptions::default()) {
            Err(GridError::TlsUnstable(msg)) => {
                log::warn!("TLS unstable ({msg}); using OLS");
                let mut f = ols_fit(problem)?;
                f.fell_back = true;
                Ok(f)
            }
            other => other.map(|mut f| {
                f.engine = Engine::TlsFallback;
                f
            }),
        },
    }
}
