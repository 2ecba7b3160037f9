//! Three-phase estimators with phases stacked as datasets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::network::{blocks, hstack, lift, reduce, vstack, Reduced};
use super::{EstimateReport, EstimatorOptions, Flag, Method};
use crate::error::{GridError, Result};
use crate::linalg;
use crate::regression::{fit, RegressionProblem};
use crate::three_phase::ThreePhaseMeasurementSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreePhaseMode {
    /// Equal self and equal mutual impedances: fits `R_L, X_L, R_M, X_M`.
    Coupled,
    /// Mutual impedances ignored: one network impedance fit over all phases.
    Decoupled,
}

impl std::str::FromStr for ThreePhaseMode {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" => Ok(Self::Coupled),
            "decoupled" => Ok(Self::Decoupled),
            other => Err(GridError::Input(format!("unknown three-phase mode '{other}'"))),
        }
    }
}

fn mean_block(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    parts.iter().fold(DMatrix::zeros(parts[0].nrows(), parts[0].ncols()), |acc, m| acc + *m) / parts.len() as f64
}

/// Fit the stacked per-phase impedance model. In coupled mode each phase
/// also regresses on the summed currents of the two other phases.
pub fn estimate_three_phase(
    data: &ThreePhaseMeasurementSet,
    mode: ThreePhaseMode,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    let checked = ThreePhaseMeasurementSet::new(data.phases.clone())?;
    let red: Vec<Reduced> = checked.phases.iter().map(|p| reduce(p, opts)).collect::<Result<_>>()?;
    let p = red[0].p.clone();
    let q = p.ncols();
    let n_rows = red[0].v.nrows();
    let s_rr = mean_block(&red.iter().map(|r| &r.s_rr).collect::<Vec<_>>());
    let s_ii = mean_block(&red.iter().map(|r| &r.s_ii).collect::<Vec<_>>());
    let s_ri = mean_block(&red.iter().map(|r| &r.s_ri).collect::<Vec<_>>());
    let s_v = mean_block(&red.iter().map(|r| &r.s_v).collect::<Vec<_>>());

    let lhs = vstack(&red.iter().map(|r| r.v.clone()).collect::<Vec<_>>());
    let (rhs, cov, method) = match mode {
        ThreePhaseMode::Decoupled => {
            let rhs = vstack(&red.iter().map(|r| hstack(&[&r.re, &r.im])).collect::<Vec<_>>());
            let cov = blocks(
                &[
                    vec![Some(&s_rr), Some(&s_ri), None],
                    vec![Some(&s_ri), Some(&s_ii), None],
                    vec![None, None, Some(&s_v)],
                ],
                q,
            );
            (rhs, cov, Method::ThreePhaseDecoupled)
        }
        ThreePhaseMode::Coupled => {
            let rows: Vec<DMatrix<f64>> = (0..3)
                .map(|ph| {
                    let (a, b) = (&red[(ph + 1) % 3], &red[(ph + 2) % 3]);
                    let (re_sum, im_sum) = (&a.re + &b.re, &a.im + &b.im);
                    hstack(&[&red[ph].re, &red[ph].im, &re_sum, &im_sum])
                })
                .collect();
            let (s2_rr, s2_ii, s2_ri) = (&s_rr * 2.0, &s_ii * 2.0, &s_ri * 2.0);
            let cov = blocks(
                &[
                    vec![Some(&s_rr), Some(&s_ri), None, None, None],
                    vec![Some(&s_ri), Some(&s_ii), None, None, None],
                    vec![None, None, Some(&s2_rr), Some(&s2_ri), None],
                    vec![None, None, Some(&s2_ri), Some(&s2_ii), None],
                    vec![None, None, None, None, Some(&s_v)],
                ],
                q,
            );
            (vstack(&rows), cov, Method::ThreePhaseCoupled)
        }
    };
    let problem = RegressionProblem::new(lhs, rhs)
        .with_datasets(vec![0, n_rows, 2 * n_rows])
        .with_noise_cov(cov);
    let f = fit(&problem, opts.engine)?;
    let mut r = EstimateReport::new(method, opts.engine);
    r.absorb_fit(&f);
    if checked.phases.iter().any(|s| s.small_angle_violation) {
        r.flag(Flag::SmallAngleViolation);
    }
    r.diagnostics.insert("model_residual".into(), f.relative_residual);
    let names: &[&str] = match mode {
        ThreePhaseMode::Decoupled => &["R_self", "X_self"],
        ThreePhaseMode::Coupled => &["R_self", "X_self", "R_mutual", "X_mutual"],
    };
    for (i, name) in names.iter().enumerate() {
        let m = lift(&f.coef, i, &p);
        r.diagnostics.insert(format!("asymmetry_{name}"), linalg::relative_asymmetry(&m));
        r.set_matrix(name, &linalg::symmetrize(&m));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_frobenius_error;
    use crate::noise::NoiseModel;
    use crate::synth::FlowOptions;
    use crate::three_phase::{solve_three_phase_flow, ThreePhaseLine, ThreePhaseNetwork};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn feeder(mutual: f64) -> ThreePhaseNetwork {
        let names: Vec<String> = (0..4).map(|i| format!("n{i}")).collect();
        let zs = [c(0.10, 0.05), c(0.20, 0.08), c(0.15, 0.04)];
        let ends = [(0, 1), (1, 2), (1, 3)];
        let lines = ends
            .iter()
            .zip(zs)
            .map(|(&(f, t), z)| ThreePhaseLine { from: f, to: t, z_self: z, z_mutual: z * mutual })
            .collect();
        ThreePhaseNetwork::new(names, lines, 0).unwrap()
    }

    /// Light random loads, independent per phase unless `balanced`.
    fn data(net: &ThreePhaseNetwork, n: usize, balanced: bool, seed: u64) -> ThreePhaseMeasurementSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<f64> = (0..n).map(|t| t as f64 * 60.0).collect();
        let loads: Vec<Vec<Complex64>> = (0..n)
            .map(|_| {
                let mut row = vec![c(0.0, 0.0); 3 * net.n()];
                for h in 1..net.n() {
                    let base = c(rng.random_range(2.0..20.0), rng.random_range(0.5..6.0));
                    for p in 0..3 {
                        row[3 * h + p] = if balanced {
                            base
                        } else {
                            c(rng.random_range(2.0..20.0), rng.random_range(0.5..6.0))
                        };
                    }
                }
                row
            })
            .collect();
        solve_three_phase_flow(net, 16e3, &ts, &loads, &FlowOptions::default())
            .unwrap()
            .block_average_and_center(1)
            .unwrap()
    }

    fn exact() -> EstimatorOptions {
        EstimatorOptions::default().with_noise(NoiseModel::zero())
    }

    #[test]
    fn modes_coincide_without_mutuals() {
        let net = feeder(0.0);
        let set = data(&net, 200, false, 1);
        let a = estimate_three_phase(&set, ThreePhaseMode::Coupled, &exact()).unwrap();
        let b = estimate_three_phase(&set, ThreePhaseMode::Decoupled, &exact()).unwrap();
        for key in ["R_self", "X_self"] {
            assert!(relative_frobenius_error(&a.matrix(key).unwrap(), &b.matrix(key).unwrap()) < 1e-6);
        }
        assert!(a.matrix("R_mutual").unwrap().norm() < 1e-6 * a.matrix("R_self").unwrap().norm());
    }

    #[test]
    fn coupled_mode_recovers_mutuals() {
        let net = feeder(0.3);
        let set = data(&net, 200, false, 2);
        let truth = net.equivalent_impedance().unwrap();
        let r = estimate_three_phase(&set, ThreePhaseMode::Coupled, &exact()).unwrap();
        assert!(relative_frobenius_error(&r.matrix("R_self").unwrap(), &truth.r_self) < 1e-6);
        assert!(relative_frobenius_error(&r.matrix("X_self").unwrap(), &truth.x_self) < 1e-6);
        assert!(relative_frobenius_error(&r.matrix("R_mutual").unwrap(), &truth.r_mutual) < 1e-6);
        assert!(relative_frobenius_error(&r.matrix("X_mutual").unwrap(), &truth.x_mutual) < 1e-6);
        let d = estimate_three_phase(&set, ThreePhaseMode::Decoupled, &exact()).unwrap();
        assert!(d.diagnostics["model_residual"] > 1e3 * r.diagnostics["model_residual"]);
    }

    #[test]
    fn balanced_loads_hide_the_mutual_coupling() {
        let net = feeder(0.3);
        let unbalanced = estimate_three_phase(&data(&net, 200, false, 3), ThreePhaseMode::Decoupled, &exact()).unwrap();
        let balanced = estimate_three_phase(&data(&net, 200, true, 3), ThreePhaseMode::Decoupled, &exact()).unwrap();
        assert!(balanced.diagnostics["model_residual"] < 1e-6);
        assert!(balanced.diagnostics["model_residual"] < 1e-3 * unbalanced.diagnostics["model_residual"]);
    }

    #[test]
    fn misaligned_phases_are_an_input_error() {
        let net = feeder(0.3);
        let mut set = data(&net, 50, false, 4);
        set.phases[2] = set.phases[2].slice(0..40);
        let err = estimate_three_phase(&set, ThreePhaseMode::Coupled, &exact()).unwrap_err();
        assert!(matches!(err, GridError::Input(_)));
    }
}
