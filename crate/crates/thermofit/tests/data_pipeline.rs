//! Synthetic data generation and CSV round-trip checks.

mod common;

use common::table_setup;
use thermofit::bayes::{log_likelihood, SensorErrorModel};
use thermofit::data::{
    synthesize, Dataset, GroundTruthConductivity, MeasurementSchedule, SYNTHESIS_DISCRETIZATION,
};
use thermofit::solver::{predict_sensors, solve};

fn default_schedule() -> MeasurementSchedule {
    // 12 hours at one reading per 20 seconds.
    MeasurementSchedule::new(20.0, 2160).unwrap()
}

fn error_model() -> SensorErrorModel {
    SensorErrorModel::from_csv_str(thermofit::data::DEFAULT_ERROR_CSV).unwrap()
}

#[test]
fn default_protocol_yields_8640_readings() {
    let ds = synthesize(
        &GroundTruthConductivity::default_paraffin(),
        &table_setup(),
        &default_schedule(),
        &error_model(),
        42,
    )
    .unwrap();
    assert_eq!(ds.times().len(), 2160);
    assert_eq!(ds.sensors().len(), 4);
    assert_eq!(ds.n_d(), 8640);
    assert_eq!(ds.times()[0], 20.0);
    assert_eq!(*ds.times().last().unwrap(), 43_200.0);
    // Heating run: readings stay within the source/ambient bracket.
    let (lo, hi) = ds.temperature_range().unwrap();
    assert!(lo > 19.0 && hi < 57.0, "range [{lo}, {hi}]");
}

#[test]
fn synthesis_is_deterministic_in_the_seed() {
    let truth = GroundTruthConductivity::default_paraffin();
    let setup = table_setup();
    let schedule = MeasurementSchedule::new(60.0, 200).unwrap();
    let em = error_model();
    let a = synthesize(&truth, &setup, &schedule, &em, 1).unwrap();
    let b = synthesize(&truth, &setup, &schedule, &em, 1).unwrap();
    let c = synthesize(&truth, &setup, &schedule, &em, 2).unwrap();
    assert_eq!(a.concatenated(), b.concatenated());
    assert_ne!(a.concatenated(), c.concatenated());
}

#[test]
fn zero_error_model_reproduces_the_forward_predictions() {
    let truth = GroundTruthConductivity::default_paraffin();
    let setup = table_setup();
    let schedule = MeasurementSchedule::new(120.0, 100).unwrap();
    let ds = synthesize(&truth, &setup, &schedule, &SensorErrorModel::zero(), 9).unwrap();

    let traj = solve(&setup, &truth, &SYNTHESIS_DISCRETIZATION).unwrap();
    let flat = predict_sensors(&traj, &setup, &schedule.times()).unwrap();
    assert_eq!(ds.concatenated(), flat);
}

#[test]
fn csv_round_trip_is_exact() {
    let truth = GroundTruthConductivity::default_paraffin();
    let setup = table_setup();
    let schedule = MeasurementSchedule::new(45.0, 300).unwrap();
    let em = error_model();
    let ds = synthesize(&truth, &setup, &schedule, &em, 5).unwrap();

    let csv = ds.to_csv_string();
    let back = Dataset::from_csv_str(&csv, ds.sensor_positions(), em).unwrap();
    assert_eq!(ds.times(), back.times());
    assert_eq!(ds.concatenated(), back.concatenated());
    assert_eq!(ds.ambient(), back.ambient());
}

#[test]
fn csv_ingest_rejects_malformed_input() {
    let em = error_model();
    let pos = [0.005, 0.0258];
    assert!(Dataset::from_csv_str("wrong,header\n1,2\n", &pos, em.clone()).is_err());
    assert!(Dataset::from_csv_str("time_s,sensor1_C,sensor2_C\n20,21,nope\n", &pos, em.clone()).is_err());
    // Non-increasing times.
    assert!(Dataset::from_csv_str(
        "time_s,sensor1_C,sensor2_C\n40,21,22\n20,21,22\n",
        &pos,
        em.clone()
    )
    .is_err());
    // Sensor count mismatch against configured positions.
    assert!(Dataset::from_csv_str("time_s,sensor1_C\n20,21\n", &pos, em).is_err());
}

#[test]
fn steady_state_subset_keeps_the_requested_tail() {
    let truth = GroundTruthConductivity::default_paraffin();
    let setup = table_setup();
    let schedule = MeasurementSchedule::new(20.0, 2109).unwrap();
    let ds = synthesize(&truth, &setup, &schedule, &error_model(), 3).unwrap();
    let tail = ds.subset_steady_state(0.25).unwrap();
    // ceil(0.25 * 2109) = 528.
    assert_eq!(tail.times().len(), 528);
    assert_eq!(tail.times()[0], ds.times()[2109 - 528]);
    assert_eq!(*tail.times().last().unwrap(), *ds.times().last().unwrap());
    assert_eq!(tail.sensors()[2][10], ds.sensors()[2][2109 - 528 + 10]);
    assert!(ds.subset_steady_state(0.0).is_err());
    assert!(ds.subset_steady_state(1.5).is_err());
}

#[test]
fn noise_level_concentrates_the_likelihood_at_its_expected_value() {
    // With data generated as d = f + mean(f) + std(f) z, the negative log
    // likelihood of the true predictions concentrates at
    // sum log(sigma sqrt(2 pi)) + n_d / 2, with chi-square fluctuations of
    // standard deviation sqrt(n_d / 2).
    let truth = GroundTruthConductivity::default_paraffin();
    let setup = table_setup();
    let schedule = default_schedule();
    let em = error_model();
    let ds = synthesize(&truth, &setup, &schedule, &em, 42).unwrap();

    let traj = solve(&setup, &truth, &SYNTHESIS_DISCRETIZATION).unwrap();
    let flat = predict_sensors(&traj, &setup, &schedule.times()).unwrap();
    let data = ds.concatenated();
    let residuals: Vec<f64> = data.iter().zip(&flat).map(|(d, f)| d - f).collect();

    let s_like = -log_likelihood(&residuals, &em, &data).unwrap();

    let n_d = data.len() as f64;
    let log_norm: f64 = data
        .iter()
        .map(|t| (em.std_at(*t) * (2.0 * std::f64::consts::PI).sqrt()).ln())
        .sum();
    let expected = log_norm + 0.5 * n_d;
    let sd = (0.5 * n_d).sqrt();
    assert!(
        (s_like - expected).abs() < 4.0 * sd,
        "S_like {s_like} vs expected {expected} (allowed spread {})",
        4.0 * sd
    );
}

#[test]
fn ground_truth_curve_passes_through_its_anchors() {
    use thermofit::conductivity::Conductivity;
    let truth = GroundTruthConductivity::default_paraffin();
    for (t, k) in truth.anchor_temps.iter().zip(&truth.anchor_values) {
        assert!((truth.conductivity(*t) - k).abs() < 1e-12, "anchor at {t}");
    }
    // Positive over the whole plausible temperature range.
    for i in 0..=200 {
        let t = 10.0 + 60.0 * i as f64 / 200.0;
        assert!(truth.conductivity(t) > 0.0, "k({t}) <= 0");
    }
}
