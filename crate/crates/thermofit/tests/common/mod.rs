//! Shared fixtures for integration tests.
#![allow(dead_code)]

use thermofit::conductivity::ConductivityModel;
use thermofit::solver::{AmbientTemperature, ThermalSetup};

/// Rod geometry, material properties, and boundary conditions of the
/// simulated-measurement protocol.
pub fn table_setup() -> ThermalSetup {
    ThermalSetup {
        r: 0.0286,
        l: 0.093,
        sensor_positions: vec![0.005, 0.0258, 0.045, 0.0665],
        rho: 900.0,
        cp: 2100.0,
        h_source: 25.0,
        h_side: 1.0,
        h_inf: 10.0,
        t_source: 57.0,
        t_inf: AmbientTemperature::Constant(20.0),
        t0: Some(20.0),
        t_total: 43_200.0,
    }
}

/// A representative piecewise-linear conductivity over the measured range,
/// with mild structure at every scale so refinement studies have something
/// to resolve.
pub fn sample_model(n_s: usize) -> ConductivityModel {
    let t_min = 20.0;
    let t_max = 48.0;
    let k: Vec<f64> = (0..=n_s)
        .map(|i| {
            let t = t_min + (t_max - t_min) * i as f64 / n_s as f64;
            0.28 + 0.04 * ((t - 20.0) / 9.0).sin() - 0.001 * (t - 34.0)
        })
        .collect();
    ConductivityModel::new(t_min, t_max, k).unwrap()
}
