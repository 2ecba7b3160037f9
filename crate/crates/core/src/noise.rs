//! Sensor noise specification and its propagation to Cartesian current noise.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};

/// Independent zero-mean Gaussian noise on the three smart-meter channels.
///
/// All sigmas are standard deviations in SI units (volts, amps, radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_v_mag: f64,
    pub sigma_i_mag: f64,
    pub sigma_phi: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::zero()
    }
}

impl NoiseModel {
    pub fn new(sigma_v_mag: f64, sigma_i_mag: f64, sigma_phi: f64) -> Result<Self> {
        let m = Self { sigma_v_mag, sigma_i_mag, sigma_phi };
        m.validate()?;
        Ok(m)
    }

    pub fn zero() -> Self {
        Self { sigma_v_mag: 0.0, sigma_i_mag: 0.0, sigma_phi: 0.0 }
    }

    /// 0.1 % of nominal voltage, 0.5 % of the mean current magnitude and
    /// 0.005 rad on the power angle.
    pub fn smart_meter_default(nominal_voltage: f64, mean_current: f64) -> Self {
        Self {
            sigma_v_mag: 1e-3 * nominal_voltage,
            sigma_i_mag: 5e-3 * mean_current,
            sigma_phi: 5e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_v_mag", self.sigma_v_mag),
            ("sigma_i_mag", self.sigma_i_mag),
            ("sigma_phi", self.sigma_phi),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GridError::Input(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_v_mag == 0.0 && self.sigma_i_mag == 0.0 && self.sigma_phi == 0.0
    }

    /// Every sigma multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sigma_v_mag: self.sigma_v_mag * factor,
            sigma_i_mag: self.sigma_i_mag * factor,
            sigma_phi: self.sigma_phi * factor,
        }
    }

    /// Noise after averaging `block` independent readings.
    pub fn block_averaged(&self, block: usize) -> Self {
        self.scaled(1.0 / (block.max(1) as f64).sqrt())
    }

    /// Variance σ^v of the noise on a voltage-magnitude difference between two
    /// independently measured nodes.
    pub fn voltage_difference_variance(&self) -> f64 {
        2.0 * self.sigma_v_mag * self.sigma_v_mag
    }

    pub fn voltage_variance(&self) -> f64 {
        self.sigma_v_mag * self.sigma_v_mag
    }

    /// First-order covariance of `(δ^ℜ, δ^ℑ)` at one operating point.
    ///
    /// `δ^ℜ ≈ cosφ·δ|i| − |i|sinφ·δφ`, `δ^ℑ ≈ sinφ·δ|i| + |i|cosφ·δφ`.
    pub fn current_covariance_at(&self, i_mag: f64, phi: f64) -> Matrix2<f64> {
        let (s, c) = phi.sin_cos();
        let j = Matrix2::new(c, -i_mag * s, s, i_mag * c);
        let d = Matrix2::new(self.sigma_i_mag.powi(2), 0.0, 0.0, self.sigma_phi.powi(2));
        j * d * j.transpose()
    }

    /// Linearised current-noise covariance `Σ^i` averaged over a window of
    /// operating points.
    pub fn current_covariance(&self, i_mag: &[f64], phi: &[f64]) -> Matrix2<f64> {
        assert_eq!(i_mag.len(), phi.len());
        if i_mag.is_empty() {
            return Matrix2::zeros();
        }
        let sum = i_mag
            .iter()
            .zip(phi)
            .fold(Matrix2::zeros(), |acc, (&i, &p)| acc + self.current_covariance_at(i, p));
        sum / i_mag.len() as f64
    }
}
