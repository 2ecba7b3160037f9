//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns JSON text or a plain number array so the page needs
//! no glue beyond `JSON.parse`.

use gridest_core::bias;
use gridest_core::sweep::{self, SweepConfig};
use gridest_core::synth::{self, FlowOptions, ProfileGenerator};
use gridest_core::{EstimatorOptions, LinePiModel, Method};
use nalgebra::Matrix2;
use num_complex::Complex64;
use serde_json::json;
use wasm_bindgen::prelude::*;

const SOURCE_VOLTAGE: f64 = 16e3;
const METHODS: [Method; 4] = [Method::Direct, Method::Joint, Method::Reduced, Method::Impedance];

/// Mean estimates of the four single-line methods over a noise grid.
pub fn line_sweep_json(g: f64, b: f64, samples: usize, trials: usize, levels: usize, seed: u64) -> Result<String, String> {
    let err = |e: gridest_core::GridError| e.to_string();
    if !(2..=5000).contains(&samples) || !(1..=200).contains(&trials) || !(1..=12).contains(&levels) {
        return Err("samples must be 2..=5000, trials 1..=200 and levels 1..=12".into());
    }
    let prof = ProfileGenerator { samples, mean_p: 20.0, mean_q: 6.0, ..Default::default() }
        .generate(&["k".to_string()], seed)
        .map_err(err)?;
    let loads: Vec<Complex64> = (0..samples).map(|t| Complex64::new(prof.p[0][t], prof.q[0][t])).collect();
    let clean = synth::solve_line_flow(&LinePiModel::new(g, b), SOURCE_VOLTAGE, &prof.timestamps, &loads, &FlowOptions::default())
        .map_err(err)?;
    let noise = sweep::signal_relative_noise(&clean, (0, 1), 0.1).map_err(err)?;
    let cfg = SweepConfig {
        multipliers: sweep::log_multipliers(0.1, 10.0, levels),
        trials,
        methods: METHODS.to_vec(),
        options: EstimatorOptions::default().with_noise(noise),
        block_size: 1,
        seed,
    };
    let rows = sweep::run_line_sweep(&clean, (0, 1), (g, b), &cfg).map_err(err)?;
    let points: Vec<_> = sweep::aggregate(&rows)
        .iter()
        .map(|a| {
            json!({
                "level": a.noise_level,
                "method": a.method.tag(),
                "param": a.param,
                "truth": a.truth,
                "mean": a.mean,
                "std": a.std,
                "predicted_bias": a.mean_predicted_bias,
            })
        })
        .collect();
    Ok(json!({ "g": g, "b": b, "points": points }).to_string())
}

/// Lower bounds on `E|ĝ|` and `E|b̂|` as the impedance covariance grows
/// from zero to `max_std²` times `[[1, rho √ratio], [rho √ratio, ratio]]`,
/// so `rho` is the correlation of `r̂` and `x̂`.
pub fn inversion_bounds_json(g: f64, b: f64, max_std: f64, ratio: f64, rho: f64, points: usize) -> Result<String, String> {
    if !(2..=1000).contains(&points) || !(ratio > 0.0) || !(rho.abs() < 1.0) || !(max_std >= 0.0) {
        return Err("need 2..=1000 points, ratio > 0, |rho| < 1 and max_std >= 0".into());
    }
    let line = LinePiModel::new(g, b);
    let (r, x) = (line.r().map_err(|e| e.to_string())?, line.x().map_err(|e| e.to_string())?);
    let shape = Matrix2::new(1.0, rho * ratio.sqrt(), rho * ratio.sqrt(), ratio);
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let sd = max_std * k as f64 / (points - 1) as f64;
        let (lg, lb) = bias::inversion_bias_bounds(r, x, &(shape * sd * sd)).map_err(|e| e.to_string())?;
        out.push(json!({ "std_r": sd, "g_bound": lg, "b_bound": lb }));
    }
    Ok(json!({ "r": r, "x": x, "curve": out }).to_string())
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub fn line_sweep(g: f64, b: f64, samples: usize, trials: usize, levels: usize, seed: u32) -> Result<String, JsValue> {
    line_sweep_json(g, b, samples, trials, levels, seed as u64).map_err(js_err)
}

#[wasm_bindgen]
pub fn inversion_bounds(g: f64, b: f64, max_std: f64, ratio: f64, rho: f64, points: usize) -> Result<String, JsValue> {
    inversion_bounds_json(g, b, max_std, ratio, rho, points).map_err(js_err)
}

/// `[r, x]` of the admittance `g + jb`.
#[wasm_bindgen]
pub fn rx_from_gb(g: f64, b: f64) -> Result<Vec<f64>, JsValue> {
    gridest_core::rx_from_gb(g, b).map(|(r, x)| vec![r, x]).map_err(|e| js_err(e.to_string()))
}

/// `[g, b]` of the impedance `r + jx`.
#[wasm_bindgen]
pub fn gb_from_rx(r: f64, x: f64) -> Result<Vec<f64>, JsValue> {
    gridest_core::gb_from_rx(r, x).map(|(g, b)| vec![g, b]).map_err(|e| js_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn sweep_has_a_point_per_level_method_and_param() {
        let v: Value = serde_json::from_str(&line_sweep_json(10.0, -0.5, 200, 3, 4, 1).unwrap()).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 4 * 4 * 2);
    }

    #[test]
    fn bounds_start_at_the_truth() {
        let v: Value = serde_json::from_str(&inversion_bounds_json(10.0, -0.5, 0.01, 5.0, -0.3, 11).unwrap()).unwrap();
        let curve = v["curve"].as_array().unwrap();
        assert!((curve[0]["g_bound"].as_f64().unwrap() - 10.0).abs() < 1e-9);
        assert!((curve[0]["b_bound"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bad_arguments_are_errors() {
        assert!(line_sweep_json(10.0, -0.5, 1, 3, 4, 1).is_err());
        assert!(inversion_bounds_json(10.0, -0.5, 0.01, 1.0, 1.5, 10).is_err());
    }
}
