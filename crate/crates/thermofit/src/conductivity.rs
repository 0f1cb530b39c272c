//! Piecewise-linear temperature-dependent conductivity model class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::TemperatureTrajectory;

/// Anything that maps a temperature to a conductivity. The forward solver is
/// generic over this so both the estimation model class and smooth reference
/// curves can drive a simulation.
pub trait Conductivity {
    fn conductivity(&self, temperature: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Conductivity for F {
    fn conductivity(&self, temperature: f64) -> f64 {
        self(temperature)
    }
}

/// Conductivity k(T) defined by linear interpolation between `n_s + 1`
/// equally spaced temperature knots over `[t_min, t_max]`.
///
/// Outside the knot range the curve is clamped to the end values: simulated
/// nodal temperatures can transiently leave the measured range and clamping
/// keeps k positive and bounded there. A single-value model (`k.len() == 1`)
/// is the temperature-independent special case used for context calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivityModel {
    pub t_min: f64,
    pub t_max: f64,
    /// Conductivity at each knot, ordered from `t_min` to `t_max`.
    pub k_values: Vec<f64>,
}

impl ConductivityModel {
    pub fn new(t_min: f64, t_max: f64, k_values: Vec<f64>) -> Result<Self> {
        if k_values.is_empty() {
            return Err(Error::config("conductivity model needs at least one value".to_string()));
        }
        if k_values.len() > 1 && !(t_max > t_min) {
            return Err(Error::config(format!(
                "conductivity knot range must be increasing, got [{t_min}, {t_max}]"
            )));
        }
        if k_values.iter().any(|k| !k.is_finite() || *k <= 0.0) {
            return Err(Error::config("conductivity values must be finite and positive".to_string()));
        }
        Ok(ConductivityModel { t_min, t_max, k_values })
    }

    /// Temperature-independent model with a single conductivity value.
    pub fn constant(k: f64) -> Result<Self> {
        ConductivityModel::new(0.0, 0.0, vec![k])
    }

    /// Number of linear segments.
    pub fn n_segments(&self) -> usize {
        self.k_values.len().saturating_sub(1)
    }

    /// Knot temperatures, equally spaced over `[t_min, t_max]`.
    pub fn knots(&self) -> Vec<f64> {
        let n_s = self.n_segments();
        if n_s == 0 {
            return vec![self.t_min];
        }
        (0..=n_s)
            .map(|i| self.t_min + (self.t_max - self.t_min) * i as f64 / n_s as f64)
            .collect()
    }

    /// Linear interpolation inside the knot range, clamped outside.
    pub fn evaluate(&self, temperature: f64) -> f64 {
        let n_s = self.n_segments();
        if n_s == 0 {
            return self.k_values[0];
        }
        if temperature <= self.t_min {
            return self.k_values[0];
        }
        if temperature >= self.t_max {
            return self.k_values[n_s];
        }
        let span = self.t_max - self.t_min;
        let pos = (temperature - self.t_min) / span * n_s as f64;
        let i = (pos.floor() as usize).min(n_s - 1);
        let frac = pos - i as f64;
        self.k_values[i] + frac * (self.k_values[i + 1] - self.k_values[i])
    }

    /// Doubles the segment count by inserting the midpoint of every segment,
    /// leaving the represented curve unchanged.
    pub fn refine(&self) -> ConductivityModel {
        let n_s = self.n_segments();
        if n_s == 0 {
            return self.clone();
        }
        let mut k = Vec::with_capacity(2 * n_s + 1);
        for i in 0..n_s {
            k.push(self.k_values[i]);
            k.push(0.5 * (self.k_values[i] + self.k_values[i + 1]));
        }
        k.push(self.k_values[n_s]);
        ConductivityModel { t_min: self.t_min, t_max: self.t_max, k_values: k }
    }

    /// Minimum conductivity the solver actually used: the model evaluated at
    /// every element-average temperature of the trajectory, over all steps.
    pub fn k_min_over_elements(&self, traj: &TemperatureTrajectory) -> f64 {
        let mut k_min = f64::INFINITY;
        for m in 0..traj.n_steps() + 1 {
            let row = traj.row(m);
            for e in 0..row.len() - 1 {
                let t_avg = 0.5 * (row[e] + row[e + 1]);
                k_min = k_min.min(self.evaluate(t_avg));
            }
        }
        k_min
    }
}

impl Conductivity for ConductivityModel {
    fn conductivity(&self, temperature: f64) -> f64 {
        self.evaluate(temperature)
    }
}
