//! Phase-less line parameter estimation for distribution grids.
//!
//! Synthetic grid models and smart-meter measurements, errors-in-variables
//! regression engines, the single-line and network estimators and their
//! closed-form bias predictions.

pub mod bias;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod linalg;
pub mod measurement;
pub mod network_file;
pub mod noise;
pub mod regression;
pub mod sweep;
pub mod synth;
pub mod three_phase;

pub use error::{GridError, Result};
pub use estimators::{EstimateReport, EstimatorOptions, Flag, Method};
pub use grid::{gb_from_rx, rx_from_gb, Branch, LinePiModel, NetworkModel};
pub use measurement::{LineData, MeasurementSet};
pub use noise::NoiseModel;
pub use regression::Engine;
