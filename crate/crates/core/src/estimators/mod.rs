//! Line, network and three-phase parameter estimators.
//!
//! Every estimator is a pure function of a measurement set and an
//! [`EstimatorOptions`] value and returns an [`EstimateReport`]. Degenerate
//! outcomes (divergence, collapse to zero, unstable TLS with fallback) come
//! back as flagged reports rather than errors.

mod line;
mod network;
mod three_phase;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::bias::BiasReport;
use crate::error::{GridError, Result};
use crate::noise::NoiseModel;
use crate::regression::{Engine, Fit};

pub use line::{
    estimate_line_admittance_direct, estimate_line_impedance, estimate_line_joint, estimate_line_joint_with_phase,
    estimate_line_reduced,
};
pub use network::{estimate_network_impedance, estimate_network_reduced};
pub use three_phase::{estimate_three_phase, ThreePhaseMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Direct admittance regression with the phase term treated as noise.
    #[serde(rename = "a")]
    Direct,
    /// Alternating phase and parameter updates.
    #[serde(rename = "b")]
    Joint,
    /// Reduced model without the phase term.
    #[serde(rename = "c")]
    Reduced,
    /// Impedance regression.
    #[serde(rename = "d")]
    Impedance,
    #[serde(rename = "net-reduced")]
    NetworkReduced,
    #[serde(rename = "net-impedance")]
    NetworkImpedance,
    #[serde(rename = "three-phase-coupled")]
    ThreePhaseCoupled,
    #[serde(rename = "three-phase-decoupled")]
    ThreePhaseDecoupled,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Direct,
        Method::Joint,
        Method::Reduced,
        Method::Impedance,
        Method::NetworkReduced,
        Method::NetworkImpedance,
        Method::ThreePhaseCoupled,
        Method::ThreePhaseDecoupled,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Direct => "a",
            Method::Joint => "b",
            Method::Reduced => "c",
            Method::Impedance => "d",
            Method::NetworkReduced => "net-reduced",
            Method::NetworkImpedance => "net-impedance",
            Method::ThreePhaseCoupled => "three-phase-coupled",
            Method::ThreePhaseDecoupled => "three-phase-decoupled",
        }
    }

    pub fn is_single_line(&self) -> bool {
        matches!(self, Method::Direct | Method::Joint | Method::Reduced | Method::Impedance)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s.trim())
            .ok_or_else(|| GridError::Input(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// The method ignores the voltage phase and carries its bias.
    OmittedPhaseBias,
    /// Iterations stopped at the cap before the tolerance was met.
    NotConverged,
    /// Parameter norm exceeded the divergence cap.
    Diverged,
    /// Parameters collapsed towards zero.
    Collapsed,
    /// TLS was unstable and OLS was used instead.
    FellBack,
    /// Noise on the real and imaginary current components is correlated.
    CurrentCorrelationHazard,
    /// The data left the small-angle regime of the linear model.
    SmallAngleViolation,
    /// A sign rule clamped an admittance entry to zero.
    SignClamped,
    /// A secondary variant of the method could not be evaluated.
    VariantFailed,
}

/// A scalar or a row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Param {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Param::Matrix(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Param::Scalar(v) => DMatrix::from_element(1, 1, *v),
            Param::Matrix(rows) => {
                let n = rows.len();
                let m = rows.first().map_or(0, |r| r.len());
                DMatrix::from_fn(n, m, |i, j| rows[i][j])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub engine: Engine,
    pub params: BTreeMap<String, Param>,
    pub converged: bool,
    pub iterations: usize,
    /// Smallest retained over largest discarded singular value.
    pub snr: Option<f64>,
    #[serde(default)]
    pub predicted_bias: Vec<BiasReport>,
    /// Covariance of the primary parameters, row-major.
    pub predicted_variance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sign_clamped: BTreeMap<String, bool>,
    #[serde(default)]
    pub flags: Vec<Flag>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn new(method: Method, engine: Engine) -> Self {
        Self {
            method,
            engine,
            params: BTreeMap::new(),
            converged: true,
            iterations: 1,
            snr: None,
            predicted_bias: Vec::new(),
            predicted_variance: None,
            sign_clamped: BTreeMap::new(),
            flags: Vec::new(),
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        match self.params.get(name)? {
            Param::Scalar(v) => Some(*v),
            Param::Matrix(_) => None,
        }
    }

    pub fn matrix(&self, name: &str) -> Option<DMatrix<f64>> {
        self.params.get(name).map(Param::to_matrix)
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub(crate) fn set_scalar(&mut self, name: &str, v: f64) {
        self.params.insert(name.to_string(), Param::Scalar(v));
    }

    pub(crate) fn set_matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.params.insert(name.to_string(), Param::from_matrix(m));
    }

    pub(crate) fn flag(&mut self, flag: Flag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    /// Record SNR, fallback and residual of a regression.
    pub(crate) fn absorb_fit(&mut self, fit: &Fit) {
        self.snr = Some(self.snr.map_or(fit.snr, |s| s.min(fit.snr)));
        if fit.fell_back {
            self.flag(Flag::FellBack);
        }
        let r = self.diagnostics.entry("relative_residual".into()).or_insert(0.0);
        *r = r.max(fit.relative_residual);
    }

    pub(crate) fn set_variance(&mut self, cov: &Matrix2<f64>) {
        self.predicted_variance = Some(vec![vec![cov[(0, 0)], cov[(0, 1)]], vec![cov[(1, 0)], cov[(1, 1)]]]);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub engine: Engine,
    /// Noise of one raw reading; scaled down by the block size of the data.
    pub noise: NoiseModel,
    /// Strength of the phase regulariser of the impedance method.
    pub lambda: f64,
    pub max_iter: usize,
    /// Relative parameter change that ends the joint iteration.
    pub tol: f64,
    /// Divergence and collapse thresholds relative to the starting norm.
    pub divergence_factor: f64,
    pub collapse_factor: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            engine: Engine::Tls,
            noise: NoiseModel::default(),
            lambda: 0.0,
            max_iter: 100,
            tol: 1e-8,
            divergence_factor: 1e6,
            collapse_factor: 1e-6,
        }
    }
}

impl EstimatorOptions {
    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GridError::Input(format!("lambda must be a finite non-negative number, got {}", self.lambda)));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(GridError::Input("max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn centered(v: &[f64]) -> Vec<f64> {
    let m = crate::linalg::mean(v);
    v.iter().map(|x| x - m).collect()
}
