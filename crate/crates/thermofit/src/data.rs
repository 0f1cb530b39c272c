//! Measurement datasets: synthetic data generation, CSV export/ingest, and
//! the ground-truth conductivity curve used to produce them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::SensorErrorModel;
use crate::conductivity::Conductivity;
use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::solver::{predict_sensors, solve, Discretization, ThermalSetup};

/// Sensor error curves for the shipped temperature sensor, tabulated per
/// degree over the calibrated range.
pub const DEFAULT_ERROR_CSV: &str = include_str!("../data/ds18b20_error.csv");

/// Conductivity anchor points for the paraffin wax used in the reference
/// experiment.
pub const DEFAULT_ANCHORS_CSV: &str = include_str!("../data/paraffin_anchors.csv");

/// Reference discretization for data synthesis: fine enough that the
/// forward-model error is far below the sensor noise floor.
pub const SYNTHESIS_DISCRETIZATION: Discretization = Discretization { n_e: 64, n_t: 8192 };

/// Ground-truth conductivity: a natural cubic spline through tabulated
/// anchor points, linearly extrapolated outside them.
#[derive(Debug, Clone)]
pub struct GroundTruthConductivity {
    pub anchor_temps: Vec<f64>,
    pub anchor_values: Vec<f64>,
    spline: CubicSpline,
}

impl GroundTruthConductivity {
    pub fn new(anchor_temps: Vec<f64>, anchor_values: Vec<f64>) -> Result<Self> {
        if anchor_values.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(Error::data("anchor conductivities must be positive and finite".to_string()));
        }
        let spline = CubicSpline::new(anchor_temps.clone(), anchor_values.clone())?;
        Ok(GroundTruthConductivity { anchor_temps, anchor_values, spline })
    }

    /// Parses the 2-column CSV `temp_C,k_W_per_mC`.
    pub fn from_csv_str(content: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(content.as_bytes());
        let headers = reader.headers().map_err(|e| Error::data(format!("anchor header: {e}")))?.clone();
        let expected = ["temp_C", "k_W_per_mC"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::data(format!("anchor header must be {}", expected.join(","))));
        }
        let mut temps = Vec::new();
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::data(format!("anchor row {}: {e}", i + 2)))?;
            let field = |j: usize| -> Result<f64> {
                record
                    .get(j)
                    .ok_or_else(|| Error::data(format!("anchor row {}: missing column {j}", i + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::data(format!("anchor row {}: {e}", i + 2)))
            };
            temps.push(field(0)?);
            values.push(field(1)?);
        }
        GroundTruthConductivity::new(temps, values)
    }

    pub fn default_paraffin() -> Self {
        GroundTruthConductivity::from_csv_str(DEFAULT_ANCHORS_CSV).expect("embedded anchor table is valid")
    }
}

impl Conductivity for GroundTruthConductivity {
    fn conductivity(&self, temperature: f64) -> f64 {
        self.spline.evaluate(temperature)
    }
}

/// Uniform measurement schedule: readings at `t_i = i * cadence` for
/// `i = 1..=count` (the initial condition at t = 0 is not a reading).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSchedule {
    pub cadence: f64,
    pub count: usize,
}

impl MeasurementSchedule {
    pub fn new(cadence: f64, count: usize) -> Result<Self> {
        if !(cadence > 0.0) || count == 0 {
            return Err(Error::config(format!(
                "measurement schedule needs cadence > 0 and count > 0, got {cadence} and {count}"
            )));
        }
        Ok(MeasurementSchedule { cadence, count })
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.count).map(|i| i as f64 * self.cadence).collect()
    }

    pub fn duration(&self) -> f64 {
        self.count as f64 * self.cadence
    }
}

/// A measurement dataset: one shared time axis, one reading series per
/// sensor, and the error model describing the sensor noise.
#[derive(Debug, Clone)]
pub struct Dataset {
    times: Vec<f64>,
    sensors: Vec<Vec<f64>>,
    sensor_positions: Vec<f64>,
    ambient: Option<Vec<f64>>,
    error_model: SensorErrorModel,
}

impl Dataset {
    pub fn new(
        times: Vec<f64>,
        sensors: Vec<Vec<f64>>,
        sensor_positions: Vec<f64>,
        ambient: Option<Vec<f64>>,
        error_model: SensorErrorModel,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::data("dataset has no readings".to_string()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::data("reading times must be positive and strictly increasing".to_string()));
        }
        if sensors.is_empty() || sensors.len() != sensor_positions.len() {
            return Err(Error::data("one reading series per sensor position is required".to_string()));
        }
        if sensors.iter().any(|s| s.len() != times.len()) {
            return Err(Error::data("every sensor series must match the time axis length".to_string()));
        }
        if let Some(a) = &ambient {
            if a.len() != times.len() {
                return Err(Error::data("ambient series must match the time axis length".to_string()));
            }
        }
        let all_finite = sensors.iter().flatten().all(|v| v.is_finite())
            && ambient.iter().flatten().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::data("non-finite reading in dataset".to_string()));
        }
        Ok(Dataset { times, sensors, sensor_positions, ambient, error_model })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sensors(&self) -> &[Vec<f64>] {
        &self.sensors
    }

    pub fn sensor_positions(&self) -> &[f64] {
        &self.sensor_positions
    }

    pub fn ambient(&self) -> Option<&[f64]> {
        self.ambient.as_deref()
    }

    pub fn error_model(&self) -> &SensorErrorModel {
        &self.error_model
    }

    /// Total number of readings `n_d` across all sensors.
    pub fn n_d(&self) -> usize {
        self.sensors.len() * self.times.len()
    }

    /// All readings laid out sensor-major, matching the prediction layout.
    pub fn concatenated(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.n_d());
        for s in &self.sensors {
            d.extend_from_slice(s);
        }
        d
    }

    /// Range of the measured temperatures across all sensors.
    pub fn temperature_range(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in self.sensors.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !(hi > lo) {
            return Err(Error::data(format!("degenerate measured temperature range [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }

    /// The same readings under a different error model (perturbation studies
    /// change the likelihood, not the recorded data).
    pub fn with_error_model(&self, error_model: SensorErrorModel) -> Result<Dataset> {
        Dataset::new(
            self.times.clone(),
            self.sensors.clone(),
            self.sensor_positions.clone(),
            self.ambient.clone(),
            error_model,
        )
    }

    /// Keeps the last `ceil(fraction * n)` readings of every series,
    /// for analyses restricted to the near-steady tail of a run.
    pub fn subset_steady_state(&self, fraction: f64) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("fraction must be in (0, 1], got {fraction}")));
        }
        let n = self.times.len();
        let keep = ((fraction * n as f64).ceil() as usize).clamp(1, n);
        let start = n - keep;
        Dataset::new(
            self.times[start..].to_vec(),
            self.sensors.iter().map(|s| s[start..].to_vec()).collect(),
            self.sensor_positions.clone(),
            self.ambient.as_ref().map(|a| a[start..].to_vec()),
            self.error_model.clone(),
        )
    }

    /// Writes the dataset as CSV: `time_s,sensor1_C,...,sensorN_C[,ambient_C]`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("time_s");
        for i in 1..=self.sensors.len() {
            out.push_str(&format!(",sensor{i}_C"));
        }
        if self.ambient.is_some() {
            out.push_str(",ambient_C");
        }
        out.push('\n');
        for (m, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for s in &self.sensors {
                out.push_str(&format!(",{}", s[m]));
            }
            if let Some(a) = &self.ambient {
                out.push_str(&format!(",{}", a[m]));
            }
            out.push('\n');
        }
        out
    }

    pub fn export_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::data(format!("writing {}: {e}", path.display())))
    }

    /// Parses a dataset CSV written by [`Dataset::to_csv_string`]. Sensor
    /// positions and the error model are not part of the file and must be
    /// supplied by the caller (they live in the run configuration).
    pub fn from_csv_str(
        content: &str,
        sensor_positions: &[f64],
        error_model: SensorErrorModel,
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(content.as_bytes());
        let headers = reader.headers().map_err(|e| Error::data(format!("dataset header: {e}")))?.clone();
        let cols: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
        if cols.first().map(String::as_str) != Some("time_s") {
            return Err(Error::data("dataset header must start with time_s".to_string()));
        }
        let has_ambient = cols.last().map(String::as_str) == Some("ambient_C");
        let n_sensors = cols.len() - 1 - usize::from(has_ambient);
        for (i, c) in cols[1..1 + n_sensors].iter().enumerate() {
            let expected = format!("sensor{}_C", i + 1);
            if c != &expected {
                return Err(Error::data(format!("dataset column {} must be {expected}, got {c}", i + 2)));
            }
        }
        if n_sensors != sensor_positions.len() {
            return Err(Error::data(format!(
                "dataset has {n_sensors} sensor columns but {} positions were configured",
                sensor_positions.len()
            )));
        }
        let mut times = Vec::new();
        let mut sensors: Vec<Vec<f64>> = vec![Vec::new(); n_sensors];
        let mut ambient: Vec<f64> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::data(format!("dataset row {}: {e}", i + 2)))?;
            if record.len() != cols.len() {
                return Err(Error::data(format!(
                    "dataset row {}: expected {} fields, got {}",
                    i + 2,
                    cols.len(),
                    record.len()
                )));
            }
            let parse = |j: usize| -> Result<f64> {
                record[j]
                    .parse::<f64>()
                    .map_err(|e| Error::data(format!("dataset row {}: {e}", i + 2)))
            };
            times.push(parse(0)?);
            for (s, series) in sensors.iter_mut().enumerate() {
                series.push(parse(1 + s)?);
            }
            if has_ambient {
                ambient.push(parse(1 + n_sensors)?);
            }
        }
        Dataset::new(times, sensors, sensor_positions.to_vec(), has_ambient.then_some(ambient), error_model)
    }

    pub fn from_csv_path(
        path: &std::path::Path,
        sensor_positions: &[f64],
        error_model: SensorErrorModel,
    ) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("reading {}: {e}", path.display())))?;
        Dataset::from_csv_str(&content, sensor_positions, error_model)
    }
}

/// Generates a synthetic dataset: solves the forward model with the
/// ground-truth conductivity on a fine reference grid, then corrupts each
/// reading with the sensor error evaluated at the simulated temperature,
/// `d = f + mean(f) + std(f) * z` with `z ~ N(0, 1)`.
pub fn synthesize(
    truth: &impl Conductivity,
    setup: &ThermalSetup,
    schedule: &MeasurementSchedule,
    error_model: &SensorErrorModel,
    seed: u64,
) -> Result<Dataset> {
    let mut setup = setup.clone();
    if schedule.duration() > setup.t_total {
        setup.t_total = schedule.duration();
    }
    let times = schedule.times();
    let traj = solve(&setup, truth, &SYNTHESIS_DISCRETIZATION)?;
    let flat = predict_sensors(&traj, &setup, &times)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = times.len();
    let mut sensors = Vec::with_capacity(setup.sensor_positions.len());
    for s in 0..setup.sensor_positions.len() {
        let mut series = Vec::with_capacity(n);
        for m in 0..n {
            let f = flat[s * n + m];
            let z: f64 = rng.sample(StandardNormal);
            series.push(f + error_model.mean_at(f) + error_model.std_at(f) * z);
        }
        sensors.push(series);
    }
    let ambient: Vec<f64> = times.iter().map(|t| setup.t_inf.at(*t)).collect();
    Dataset::new(times, sensors, setup.sensor_positions.clone(), Some(ambient), error_model.clone())
}
