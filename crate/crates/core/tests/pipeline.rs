//! File formats end to end: synthesise, write, read back, estimate.

use gridest_core::estimators::{estimate_line_impedance, estimate_network_impedance};
use gridest_core::measurement::block_average_and_center;
use gridest_core::network_file::NetworkFile;
use gridest_core::synth::{self, FlowOptions, LoadProfile, ProfileGenerator};
use gridest_core::{EstimatorOptions, MeasurementSet, NoiseModel};

const FEEDER: &str = r#"{
  "format": 1,
  "nodes": ["s", "a", "b", "c"],
  "slack": "s",
  "edges": [
    {"from": "s", "to": "a", "g": 12.0, "b": -3.0},
    {"from": "a", "to": "b", "g": 7.0, "b": -2.0},
    {"from": "a", "to": "c", "g": 5.0, "b": -4.0}
  ]
}"#;

fn feeder_data(samples: usize) -> (NetworkFile, MeasurementSet) {
    let file = NetworkFile::from_json(FEEDER).unwrap();
    let net = file.to_model().unwrap();
    let names: Vec<String> = net.names().iter().filter(|n| *n != "s").cloned().collect();
    let loads = ProfileGenerator { samples, mean_p: 15.0, mean_q: 5.0, ..Default::default() }.generate(&names, 5).unwrap();
    let set = synth::solve_network_flow(&net, 16e3, &loads.timestamps, &loads.per_timestamp(net.names()), &FlowOptions::default())
        .unwrap();
    (file, set)
}

#[test]
fn csv_round_trip_preserves_estimates() {
    let (_, clean) = feeder_data(300);
    let noisy = synth::apply_noise(&clean, &NoiseModel::new(1e-4, 1e-5, 1e-4).unwrap(), 1).unwrap();
    let mut buf = Vec::new();
    noisy.write_csv(&mut buf).unwrap();
    let back = MeasurementSet::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 300);
    assert_eq!(back.nodes.len(), 4);
    assert_eq!(back.lines.len(), 3);
    let opts = EstimatorOptions::default().with_noise(NoiseModel::new(1e-4, 1e-5, 1e-4).unwrap());
    let a = estimate_network_impedance(&block_average_and_center(&noisy, 1).unwrap(), &opts).unwrap();
    let b = estimate_network_impedance(&block_average_and_center(&back, 1).unwrap(), &opts).unwrap();
    let diff = (a.matrix("G").unwrap() - b.matrix("G").unwrap()).norm();
    assert!(diff < 1e-9 * a.matrix("G").unwrap().norm(), "{diff}");
}

#[test]
fn truth_sidecar_restores_the_latent_phase() {
    let (_, clean) = feeder_data(50);
    let mut data = Vec::new();
    let mut truth = Vec::new();
    clean.write_csv(&mut data).unwrap();
    clean.write_truth_csv(&mut truth).unwrap();
    let plain = MeasurementSet::read_csv(data.as_slice()).unwrap();
    assert!(plain.latent_theta().is_none());
    let full = plain.read_truth_csv(truth.as_slice()).unwrap();
    let (want, got) = (clean.latent_theta().unwrap(), full.latent_theta().unwrap());
    for (w, g) in want.iter().zip(got) {
        for (x, y) in w.iter().zip(g) {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn network_file_and_loads_round_trip() {
    let (file, _) = feeder_data(10);
    assert_eq!(NetworkFile::from_json(&file.to_json().unwrap()).unwrap(), file);
    let loads = ProfileGenerator { samples: 20, ..Default::default() }.generate(&["a".into(), "b".into()], 3).unwrap();
    let mut buf = Vec::new();
    loads.write_csv(&mut buf).unwrap();
    assert_eq!(LoadProfile::read_csv(buf.as_slice()).unwrap(), loads);
}

#[test]
fn every_monitored_line_is_recovered() {
    let (file, clean) = feeder_data(400);
    let set = block_average_and_center(&clean, 1).unwrap();
    let opts = EstimatorOptions::default().with_noise(NoiseModel::zero());
    for edge in &file.edges {
        let line = (set.node_index(&edge.from).unwrap(), set.node_index(&edge.to).unwrap());
        let rep = estimate_line_impedance(&set, line, &opts).unwrap();
        let (g, b) = (rep.scalar("g").unwrap(), rep.scalar("b").unwrap());
        let scale = edge.g.hypot(edge.b);
        assert!((g - edge.g).abs() < 1e-5 * scale && (b - edge.b).abs() < 1e-5 * scale, "{}->{}: {g} {b}", edge.from, edge.to);
    }
}

#[test]
fn schema_errors_name_the_columns() {
    let err = MeasurementSet::read_csv("timestamp,id,v,i_mag,angle\n".as_bytes()).unwrap_err().to_string();
    assert!(err.contains("v_mag") && err.contains("phi") && err.contains("angle"), "{err}");
}
