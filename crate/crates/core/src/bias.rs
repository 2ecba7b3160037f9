//! Closed-form predictions of estimator bias and variance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};
use crate::linalg;
use crate::measurement::LineData;
use crate::noise::NoiseModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    OmittedPhase,
    Simultaneity,
    Endogeneity,
    InversionBound,
    GeneralTls,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub mechanism: Mechanism,
    pub predicted_bias: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BiasReport {
    fn new(mechanism: Mechanism, entries: &[(&str, f64)]) -> Self {
        Self {
            mechanism,
            predicted_bias: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, text: &str) -> Self {
        self.notes.push(text.to_string());
        self
    }
}

/// Second moments of one dataset of an errors-in-variables regression
/// `z = x A` observed as `x̃ = x + ε_x`, `z̃ = z + ε_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct TlsMoments {
    /// `var[x̃]` (p × p)
    pub var_x: DMatrix<f64>,
    /// `var[ε_x]` (p × p)
    pub var_eps_x: DMatrix<f64>,
    /// `cov[ε_x, ε_z]` (p × m)
    pub cov_eps_x_eps_z: DMatrix<f64>,
    /// `cov[ε_x, z]` with `z` noise free (p × m)
    pub cov_eps_x_z: DMatrix<f64>,
    /// `cov[x, ε_z]` with `x` noise free (p × m)
    pub cov_x_eps_z: DMatrix<f64>,
}

impl TlsMoments {
    /// Scalar instance where only the noise terms are correlated.
    pub fn scalar(var_x: f64, var_eps_x: f64, cov_eps: f64) -> Self {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        Self {
            var_x: s(var_x),
            var_eps_x: s(var_eps_x),
            cov_eps_x_eps_z: s(cov_eps),
            cov_eps_x_z: s(0.0),
            cov_x_eps_z: s(0.0),
        }
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    if s.min() == 0.0 {
        f64::INFINITY
    } else {
        s.max() / s.min()
    }
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let c = condition(m);
    if !c.is_finite() || c > 1e12 {
        return Err(GridError::Analysis(format!("{what} is singular (condition {c:e})")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| GridError::Analysis(format!("{what} is singular (condition {c:e})")))
}

fn invert2(m: &Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let d = DMatrix::from_column_slice(2, 2, m.as_slice());
    let inv = invert(&d, what)?;
    Ok(Matrix2::from_column_slice(inv.as_slice()))
}

/// TLS bias pooled over datasets:
/// `(Σ_d var[x̃_d] - var[ε_x,d])⁻¹ Σ_d (cov[ε_x,ε_z] + cov[ε_x,z] + cov[x,ε_z])`.
pub fn tls_bias_general(datasets: &[TlsMoments]) -> Result<DMatrix<f64>> {
    let first = datasets
        .first()
        .ok_or_else(|| GridError::Analysis("no datasets supplied".into()))?;
    let (p, m) = first.cov_eps_x_eps_z.shape();
    let mut lhs = DMatrix::zeros(p, p);
    let mut rhs = DMatrix::zeros(p, m);
    for d in datasets {
        if d.var_x.shape() != (p, p) || d.cov_eps_x_eps_z.shape() != (p, m) {
            return Err(GridError::Analysis("datasets have inconsistent dimensions".into()));
        }
        lhs += &d.var_x - &d.var_eps_x;
        rhs += &d.cov_eps_x_eps_z + &d.cov_eps_x_z + &d.cov_x_eps_z;
    }
    if rhs.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(p, m));
    }
    Ok(invert(&lhs, "noise-corrected regressor variance")? * rhs)
}

/// Sample moments of one line's measured series.
#[derive(Clone, Debug, PartialEq)]
pub struct LineMoments {
    pub n: usize,
    /// `var[Δ|ṽ|]`
    pub var_dv: f64,
    /// `var[(|ĩ|cosφ̃, |ĩ|sinφ̃)]`
    pub var_cs: Matrix2<f64>,
    /// `cov[Δ|ṽ|, |ĩ|sinφ̃]`
    pub cov_dv_s: f64,
    /// `cov[Δ|ṽ|, |v_k|θ]`, available for synthetic data only.
    pub cov_dv_e: Option<f64>,
    /// `σ^v`
    pub sigma_v: f64,
    /// `Σ^i`
    pub sigma_i: Matrix2<f64>,
}

impl LineMoments {
    pub fn from_data(data: &LineData, noise: &NoiseModel, phase_term: Option<&[f64]>) -> Self {
        let (c, s) = (&data.c, &data.s);
        Self {
            n: data.len(),
            var_dv: linalg::variance(&data.dv),
            var_cs: Matrix2::new(
                linalg::variance(c),
                linalg::covariance(c, s),
                linalg::covariance(c, s),
                linalg::variance(s),
            ),
            cov_dv_s: linalg::covariance(&data.dv, s),
            cov_dv_e: phase_term.map(|e| linalg::covariance(&data.dv, e)),
            sigma_v: noise.voltage_difference_variance(),
            sigma_i: noise.current_covariance(&data.i_mag, &data.phi),
        }
    }
}

/// Covariance of `(r̂, x̂)`:
/// `(σ^v + [r,x] Σ^i [r,x]ᵀ) / N · var[(|ĩ|cosφ̃, |ĩ|sinφ̃)]⁻¹`.
pub fn impedance_variance(r: f64, x: f64, moments: &LineMoments, n: usize) -> Result<Matrix2<f64>> {
    if n <= 2 {
        return Err(GridError::Analysis(format!("need more than two samples, got {n}")));
    }
    let z = Vector2::new(r, x);
    let scale = moments.sigma_v + (z.transpose() * moments.sigma_i * z)[(0, 0)];
    if scale == 0.0 {
        return Ok(Matrix2::zeros());
    }
    Ok(invert2(&moments.var_cs, "current covariance")? * (scale / n as f64))
}

/// Bias of method (a) from treating the phase term as noise. For `ĝ` the
/// coefficient is `-b`, for `b̂` it is `+g`, both over
/// `var[Δ|ṽ|] - σ^v` times `cov[Δ|ṽ|, |v_k|θ]`.
pub fn omitted_phase_bias(moments: &LineMoments, g: f64, b: f64) -> Result<BiasReport> {
    let cov = moments
        .cov_dv_e
        .ok_or_else(|| GridError::Analysis("the phase covariance is unavailable without ground truth".into()))?;
    let denom = moments.var_dv - moments.sigma_v;
    if !(denom > 0.0) {
        return Err(GridError::Analysis(format!(
            "voltage-difference variance {} does not exceed its noise variance {}",
            moments.var_dv, moments.sigma_v
        )));
    }
    Ok(BiasReport::new(Mechanism::OmittedPhase, &[("g", -b * cov / denom), ("b", g * cov / denom)])
        .note("sign derived from the admittance model; the b entry mirrors the g coefficient"))
}

/// Moments entering the simultaneity bias of method (b).
#[derive(Clone, Debug, PartialEq)]
pub struct SimultaneityMoments {
    /// `var[(Δ|ṽ|, -ê)]`
    pub var_a: Matrix2<f64>,
    /// `var[(ê, Δ|ṽ|)]`
    pub var_b: Matrix2<f64>,
    /// `var[ê - |ṽ_k|θ] + σ^v`
    pub s_e: f64,
    pub sigma_i: Matrix2<f64>,
}

impl SimultaneityMoments {
    pub fn from_series(dv: &[f64], e_hat: &[f64], e_true: &[f64], sigma_v: f64, sigma_i: Matrix2<f64>) -> Self {
        let neg: Vec<f64> = e_hat.iter().map(|v| -v).collect();
        let var2 = |a: &[f64], b: &[f64]| {
            let ab = linalg::covariance(a, b);
            Matrix2::new(linalg::variance(a), ab, ab, linalg::variance(b))
        };
        let diff: Vec<f64> = e_hat.iter().zip(e_true).map(|(a, b)| a - b).collect();
        Self {
            var_a: var2(dv, &neg),
            var_b: var2(e_hat, dv),
            s_e: linalg::variance(&diff) + sigma_v,
            sigma_i,
        }
    }
}

/// Simultaneity bias of method (b), evaluated as printed:
/// `-(var_a + var_b - s^e I)⁻¹ Σ^i [g, b]†`, whose entries are reported as
/// the biases on `(b̂, ĝ)` in that order.
pub fn simultaneity_bias(m: &SimultaneityMoments, g: f64, b: f64) -> Result<BiasReport> {
    let norm2 = g * g + b * b;
    if norm2 == 0.0 {
        return Err(GridError::Analysis("zero admittance".into()));
    }
    let right = m.sigma_i * Vector2::new(g, b) / norm2;
    if right.iter().all(|v| *v == 0.0) {
        return Ok(BiasReport::new(Mechanism::Simultaneity, &[("b", 0.0), ("g", 0.0)]));
    }
    let bracket = m.var_a + m.var_b - Matrix2::identity() * m.s_e;
    let v = -invert2(&bracket, "simultaneity bracket")? * right;
    Ok(BiasReport::new(Mechanism::Simultaneity, &[("b", v[0]), ("g", v[1])])
        .note("first-order approximation; loose at high noise"))
}

/// Bias of `ρ̂` from the reduced model:
/// `-[1,0] (var[(s̃, Δ̃)] - diag(σ^ℑ, σ^v))⁻¹ [cov(δ^ℜ, δ^ℑ), 0]ᵀ`.
pub fn endogeneity_bias(moments: &LineMoments) -> Result<BiasReport> {
    let cross = moments.sigma_i[(0, 1)];
    if cross == 0.0 {
        return Ok(BiasReport::new(Mechanism::Endogeneity, &[("rho", 0.0)]));
    }
    let bracket = Matrix2::new(
        moments.var_cs[(1, 1)] - moments.sigma_i[(1, 1)],
        moments.cov_dv_s,
        moments.cov_dv_s,
        moments.var_dv - moments.sigma_v,
    );
    let inv = invert2(&bracket, "endogeneity bracket")?;
    Ok(BiasReport::new(Mechanism::Endogeneity, &[("rho", -inv[(0, 0)] * cross)]))
}

/// Jensen lower bounds on `E[|ĝ|]` and `E[|b̂|]` for admittances obtained by
/// inverting unbiased impedance estimates with covariance `cov`.
pub fn inversion_bias_bounds(r: f64, x: f64, cov: &Matrix2<f64>) -> Result<(f64, f64)> {
    if !(r > 0.0 && x > 0.0) {
        return Err(GridError::Input(format!("bounds need r > 0 and x > 0, got ({r}, {x})")));
    }
    let tol = 1e-12 * cov.abs().max();
    let symmetric = (cov[(0, 1)] - cov[(1, 0)]).abs() <= tol;
    if !symmetric || cov.symmetric_eigen().eigenvalues.min() < -tol {
        return Err(GridError::Input("covariance must be symmetric positive semi-definite".into()));
    }
    let (vr, vx, c) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let cross = (c + r * x).powi(2);
    let g = r.powi(3) / ((vr + r * r).powi(2) + cross);
    let b = x.powi(3) / ((vx + x * x).powi(2) + cross);
    Ok((g, b))
}

pub fn inversion_bound_report(r: f64, x: f64, cov: &Matrix2<f64>) -> Result<BiasReport> {
    let (g, b) = inversion_bias_bounds(r, x, cov)?;
    Ok(BiasReport::new(Mechanism::InversionBound, &[("abs_g_lower", g), ("abs_b_lower", b)]))
}
