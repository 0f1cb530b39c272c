//! Forward-solver correctness against independently derived references.

mod common;

use common::{sample_model, table_setup};
use proptest::prelude::*;
use thermofit::conductivity::ConductivityModel;
use thermofit::solver::{
    min_elements_for_timesteps, predict_sensors, solve, solve_implicit, AmbientTemperature,
    Discretization, ThermalSetup,
};

/// Closed-form steady profile for constant conductivity and no lateral loss:
/// T(x) = a + b x with the two Robin conditions solved by hand as a 2x2
/// linear system.
fn steady_profile(setup: &ThermalSetup, k: f64) -> (f64, f64) {
    let t_inf = setup.t_inf.at(f64::INFINITY);
    let b = -setup.h_inf * (setup.t_source - t_inf)
        / (k + setup.h_inf * k / setup.h_source + setup.h_inf * setup.l);
    let a = setup.t_source + k * b / setup.h_source;
    (a, b)
}

#[test]
fn long_horizon_matches_closed_form_steady_robin_profile() {
    let mut setup = table_setup();
    setup.h_side = 0.0;
    setup.t_total = 400_000.0;
    let k = 0.3;
    let model = ConductivityModel::constant(k).unwrap();
    let disc = Discretization::new(16, 1024).unwrap();
    let traj = solve(&setup, &model, &disc).unwrap();

    let (a, b) = steady_profile(&setup, k);
    let dx = setup.l / disc.n_e as f64;
    for (i, v) in traj.last_row().iter().enumerate() {
        let exact = a + b * dx * i as f64;
        assert!(
            (v - exact).abs() < 1e-3,
            "node {i}: solver {v} vs closed form {exact}"
        );
    }
}

#[test]
fn time_refinement_differences_shrink_monotonically() {
    let setup = table_setup();
    let model = sample_model(4);
    let times: Vec<f64> = (1..=200).map(|i| i as f64 * 216.0).collect();

    let preds: Vec<Vec<f64>> = [8usize, 16, 32, 64, 128, 256]
        .iter()
        .map(|&n_t| {
            let disc = Discretization::new(8, n_t).unwrap();
            let traj = solve(&setup, &model, &disc).unwrap();
            predict_sensors(&traj, &setup, &times).unwrap()
        })
        .collect();

    let l2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let dists: Vec<f64> = preds.windows(2).map(|w| l2(&w[0], &w[1])).collect();
    for (i, w) in dists.windows(2).enumerate() {
        assert!(
            w[1] < w[0],
            "refinement distance not decreasing at doubling {i}: {dists:?}"
        );
    }
}

#[test]
fn time_stepping_is_first_order() {
    // Richardson comparison against a fine reference: halving the time step
    // should roughly halve the error of a first-order integrator.
    let setup = table_setup();
    let model = sample_model(4);
    let times: Vec<f64> = (1..=100).map(|i| i as f64 * 432.0).collect();
    let reference = {
        let disc = Discretization::new(8, 1 << 14).unwrap();
        let traj = solve(&setup, &model, &disc).unwrap();
        predict_sensors(&traj, &setup, &times).unwrap()
    };
    let err = |n_t: usize| -> f64 {
        let disc = Discretization::new(8, n_t).unwrap();
        let traj = solve(&setup, &model, &disc).unwrap();
        let p = predict_sensors(&traj, &setup, &times).unwrap();
        p.iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    for n_t in [32usize, 64, 128] {
        let ratio = err(n_t) / err(2 * n_t);
        assert!(
            (1.5..3.0).contains(&ratio),
            "n_t={n_t}: error ratio {ratio} not consistent with first order"
        );
    }
}

#[test]
fn explicit_and_implicit_schemes_agree_at_fine_time_steps() {
    let setup = table_setup();
    let model = sample_model(8);
    let k_min = model.k_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_e = min_elements_for_timesteps(1024, k_min, &setup).unwrap();
    let mut diffs = Vec::new();
    for n_t in [256usize, 512, 1024] {
        let disc = Discretization::new(n_e, n_t).unwrap();
        let explicit = solve(&setup, &model, &disc).unwrap();
        let implicit = solve_implicit(&setup, &model, &disc, 50, 1e-9).unwrap();
        assert!(implicit.unconverged_steps.is_empty());
        diffs.push(explicit.relative_l2_distance(&implicit.trajectory));
    }
    assert!(diffs[2] < 5e-4, "explicit/implicit relative L2 {} too large", diffs[2]);
    assert!(
        diffs[0] > diffs[1] && diffs[1] > diffs[2],
        "difference should shrink with n_t: {diffs:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Discrete maximum principle: without lateral loss and with boundary
    /// temperatures inside a band, nodal values never leave that band. The
    /// element count is raised to the level where the system matrix is an
    /// M-matrix, which is what makes the bound hold for consistent mass.
    #[test]
    fn solution_respects_temperature_bounds(
        rho in 500.0..2000.0f64,
        cp in 1000.0..3000.0f64,
        k in 0.1..1.0f64,
        h_source in 1.0..120.0f64,
        h_inf in 1.0..120.0f64,
        t_source in 0.0..100.0f64,
        t_inf in 0.0..100.0f64,
        t0 in 0.0..100.0f64,
        n_t in 1usize..48,
        t_total in 1_000.0..100_000.0f64,
    ) {
        let setup = ThermalSetup {
            r: 0.0286,
            l: 0.093,
            sensor_positions: vec![0.05],
            rho,
            cp,
            h_source,
            h_side: 0.0,
            h_inf,
            t_source,
            t_inf: AmbientTemperature::Constant(t_inf),
            t0: Some(t0),
            t_total,
        };
        let model = ConductivityModel::constant(k).unwrap();
        let n_e = min_elements_for_timesteps(n_t, k, &setup).unwrap();
        let disc = Discretization::new(n_e, n_t).unwrap();
        let traj = solve(&setup, &model, &disc).unwrap();

        let lo = t_source.min(t_inf).min(t0) - 1e-9;
        let hi = t_source.max(t_inf).max(t0) + 1e-9;
        for m in 0..=traj.n_steps() {
            for &v in traj.row(m) {
                prop_assert!(v >= lo && v <= hi, "value {v} left [{lo}, {hi}] at step {m}");
            }
        }
    }

    /// With matching source, ambient, and initial temperature the exact
    /// solution is constant in space and time for any conductivity.
    #[test]
    fn equilibrium_preserved_for_any_parameters(
        rho in 500.0..2000.0f64,
        cp in 1000.0..3000.0f64,
        k1 in 0.05..1.0f64,
        k2 in 0.05..1.0f64,
        h_source in 0.0..120.0f64,
        h_side in 0.0..10.0f64,
        h_inf in 0.0..120.0f64,
        level in 0.0..100.0f64,
        n_e in 1usize..12,
        n_t in 1usize..12,
    ) {
        let setup = ThermalSetup {
            r: 0.0286,
            l: 0.093,
            sensor_positions: vec![0.05],
            rho,
            cp,
            h_source,
            h_side,
            h_inf,
            t_source: level,
            t_inf: AmbientTemperature::Constant(level),
            t0: Some(level),
            t_total: 43_200.0,
        };
        let model = ConductivityModel::new(0.0, 100.0, vec![k1, k2]).unwrap();
        let disc = Discretization::new(n_e, n_t).unwrap();
        let traj = solve(&setup, &model, &disc).unwrap();
        for m in 0..=traj.n_steps() {
            for &v in traj.row(m) {
                prop_assert!((v - level).abs() < 1e-9, "drifted to {v} from {level}");
            }
        }
    }
}
