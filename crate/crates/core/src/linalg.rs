//! Dense linear-algebra helpers shared by the grid model and the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{GridError, Result};

/// Relative singular-value threshold used when none is supplied.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Moore–Penrose pseudo-inverse.
///
/// Singular values below `rank_tol * s_max` are treated as exact zeros. Graph
/// Laplacians are only rank `n - 1` up to rounding, so the threshold is what
/// decides their rank.
pub fn pseudo_inverse(a: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(GridError::Input(format!(
            "rank tolerance must lie in (0, 1), got {rank_tol}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(GridError::Input(
            "pseudo-inverse of a matrix with non-finite entries".into(),
        ));
    }
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let mut out = DMatrix::zeros(cols, rows);
    if s_max == 0.0 {
        return Ok(out);
    }
    let cutoff = rank_tol * s_max;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let vk = v_t.row(k).transpose();
        let uk = u.column(k);
        out += (vk * uk.transpose()) / s;
    }
    Ok(out)
}

/// Numerical rank with the same relative threshold as [`pseudo_inverse`].
pub fn numerical_rank(a: &DMatrix<f64>, rank_tol: f64) -> usize {
    let s = a.clone().singular_values();
    let s_max = s.max();
    if s_max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rank_tol * s_max).count()
}

/// Orthogonal projector onto the column space of `a`.
pub fn range_projector(a: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    Ok(a * pseudo_inverse(a, rank_tol)?)
}

/// Centering projector `I - 11ᵀ/n`: removes the mean of a vector.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    let mut o = DMatrix::from_element(n, n, -1.0 / n as f64);
    for i in 0..n {
        o[(i, i)] = (n as f64 - 1.0) / n as f64;
    }
    o
}

/// Orthonormal basis (n × n-1) of the complement of the all-ones vector.
///
/// Helmert construction; `P Pᵀ` equals [`centering_matrix`].
pub fn ones_complement_basis(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n.saturating_sub(1));
    for j in 1..n {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            p[(i, j - 1)] = 1.0 / norm;
        }
        p[(j, j - 1)] = -(j as f64) / norm;
    }
    p
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Frobenius norm of `a - aᵀ` relative to the norm of `a`.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.norm();
    if n == 0.0 {
        0.0
    } else {
        (a - a.transpose()).norm() / n
    }
}

pub fn relative_frobenius_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let t = truth.norm();
    let d = (estimate - truth).norm();
    if t == 0.0 {
        d
    } else {
        d / t
    }
}

pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().sum::<f64>() / a.len() as f64
}

/// Sample covariance with 1/(N-1) normalisation.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "covariance of series with different lengths");
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n as f64 - 1.0)
}

pub fn variance(a: &[f64]) -> f64 {
    covariance(a, a)
}

/// Sample covariance matrix of the columns of `data` (rows are samples).
pub fn column_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    if n < 2 {
        return DMatrix::zeros(data.ncols(), data.ncols());
    }
    let centered = center_columns(data);
    centered.transpose() * &centered / (n as f64 - 1.0)
}

pub fn center_columns(data: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for mut col in out.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    out
}

/// Build a matrix whose columns are the given equally long series.
pub fn columns_to_matrix(columns: &[&[f64]]) -> DMatrix<f64> {
    let rows = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i])
}

pub fn to_vector(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}
