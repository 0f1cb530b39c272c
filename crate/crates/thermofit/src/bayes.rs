//! Prior, likelihood, loss function, and the discrepancy stopping threshold.
//!
//! The negative log-posterior splits as `S(p) = S_prior(p) + S_like(p)`:
//! a multivariate normal prior over the conductivity knot values with a
//! squared exponential kernel, and an independent Gaussian likelihood whose
//! per-reading mean and standard deviation come from the sensor error curves
//! evaluated at the measured temperature.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conductivity::ConductivityModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interp::lerp_clamped;
use crate::solver::{predict_sensors, solve, Discretization, ThermalSetup};

/// Relative diagonal jitter added to the prior covariance before
/// factorization, guarding near-singular kernels at large length scales.
pub const PRIOR_JITTER_REL: f64 = 1e-10;

/// Temperature-dependent measurement error curves: mean and standard
/// deviation of the sensor error, tabulated on a strictly increasing
/// temperature grid and linearly interpolated (clamped outside the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorErrorModel {
    pub temps: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl SensorErrorModel {
    pub fn new(temps: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if temps.is_empty() || temps.len() != means.len() || temps.len() != stds.len() {
            return Err(Error::data("error model columns must be non-empty and equally long".to_string()));
        }
        if temps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::data("error model temperature grid must be strictly increasing".to_string()));
        }
        if temps.iter().chain(means.iter()).chain(stds.iter()).any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite error model entry".to_string()));
        }
        if stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::data("error model standard deviations must be positive".to_string()));
        }
        Ok(SensorErrorModel { temps, means, stds })
    }

    /// Zero-error model (mean and std identically zero) for noise-free data
    /// generation. Not valid as a likelihood error model.
    pub fn zero() -> Self {
        SensorErrorModel { temps: vec![0.0, 100.0], means: vec![0.0, 0.0], stds: vec![0.0, 0.0] }
    }

    pub fn mean_at(&self, temperature: f64) -> f64 {
        lerp_clamped(&self.temps, &self.means, temperature)
    }

    pub fn std_at(&self, temperature: f64) -> f64 {
        lerp_clamped(&self.temps, &self.stds, temperature)
    }

    /// Parses the 3-column CSV `temp_C,mean_C,std_C`.
    pub fn from_csv_str(content: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(content.as_bytes());
        let headers = reader.headers().map_err(|e| Error::data(format!("error curve header: {e}")))?.clone();
        let expected = ["temp_C", "mean_C", "std_C"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::data(format!("error curve header must be {}", expected.join(","))));
        }
        let mut temps = Vec::new();
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::data(format!("error curve row {}: {e}", i + 2)))?;
            let field = |j: usize| -> Result<f64> {
                record
                    .get(j)
                    .ok_or_else(|| Error::data(format!("error curve row {}: missing column {j}", i + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::data(format!("error curve row {}: {e}", i + 2)))
            };
            temps.push(field(0)?);
            means.push(field(1)?);
            stds.push(field(2)?);
        }
        SensorErrorModel::new(temps, means, stds)
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("reading {}: {e}", path.display())))?;
        SensorErrorModel::from_csv_str(&content)
    }
}

/// Gaussian process prior specification for the conductivity knot values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Prior mean for every knot (W/(m °C)).
    pub mu_k: f64,
    /// Prior standard deviation (W/(m °C)).
    pub sigma_k: f64,
    /// Kernel length scale (°C).
    pub length_scale: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_k > 0.0) || !(self.length_scale > 0.0) {
            return Err(Error::config(format!(
                "prior needs sigma_k > 0 and length_scale > 0, got {} and {}",
                self.sigma_k, self.length_scale
            )));
        }
        Ok(())
    }

    /// Default length scale: a third of the knot temperature range.
    pub fn default_length_scale(t_min: f64, t_max: f64) -> f64 {
        (t_max - t_min) / 3.0
    }
}

/// Squared exponential kernel covariance over the knot temperatures:
/// `sigma_k^2 exp(-((Ti - Tj) / l)^2 / 2)`. No jitter; factorization adds it.
pub fn prior_covariance(spec: &PriorSpec, knots: &[f64]) -> DMatrix<f64> {
    let n = knots.len();
    let s2 = spec.sigma_k * spec.sigma_k;
    DMatrix::from_fn(n, n, |i, j| {
        let d = (knots[i] - knots[j]) / spec.length_scale;
        s2 * (-0.5 * d * d).exp()
    })
}

/// Prior with a cached Cholesky factorization, so repeated density
/// evaluations cost O(n_p^2).
#[derive(Debug, Clone)]
pub struct Prior {
    pub spec: PriorSpec,
    pub knots: Vec<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl Prior {
    pub fn new(spec: PriorSpec, knots: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if knots.is_empty() {
            return Err(Error::config("prior needs at least one knot".to_string()));
        }
        let mut cov = prior_covariance(&spec, &knots);
        for i in 0..knots.len() {
            cov[(i, i)] += PRIOR_JITTER_REL * spec.sigma_k * spec.sigma_k;
        }
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::numerical("prior covariance not positive definite after jitter".to_string()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Prior { spec, knots, chol, log_det })
    }

    pub fn n_params(&self) -> usize {
        self.knots.len()
    }

    /// Negative log prior density `S_prior(p) = -log N(p | mu_k 1, Sigma_k)`.
    pub fn s_prior(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.knots.len() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, prior expects {}",
                p.len(),
                self.knots.len()
            )));
        }
        let centered = DVector::from_iterator(p.len(), p.iter().map(|v| v - self.spec.mu_k));
        let solved = self.chol.solve(&centered);
        let quad = centered.dot(&solved);
        let n = p.len() as f64;
        Ok(0.5 * (n * (2.0 * std::f64::consts::PI).ln() + self.log_det + quad))
    }

    /// Draws a sample from the prior; conductivity draws are redrawn until
    /// all coordinates are positive (the prior mass at k <= 0 is negligible
    /// for the default scales, so this terminates immediately in practice).
    pub fn sample_positive(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        use rand_distr::StandardNormal;
        let n = self.knots.len();
        let l = self.chol.l_dirty();
        loop {
            let z = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
            let mut draw = l * z;
            // l_dirty leaves the strict upper triangle unspecified; the
            // product above only reads the lower part, which is valid.
            for v in draw.iter_mut() {
                *v += self.spec.mu_k;
            }
            if draw.iter().all(|v| *v > 0.0) {
                return draw.iter().cloned().collect();
            }
        }
    }
}

/// Negative log prior through a one-shot [`Prior`] construction.
pub fn log_prior(p: &[f64], spec: &PriorSpec, knots: &[f64]) -> Result<f64> {
    Ok(-Prior::new(*spec, knots.to_vec())?.s_prior(p)?)
}

/// Log-density of the independent Gaussian likelihood for residuals
/// `eps = d - f`, with the error mean and std interpolated at the measured
/// temperatures. Returns `log P`; the loss uses `S_like = -log P`.
pub fn log_likelihood(residuals: &[f64], error_model: &SensorErrorModel, measured_temps: &[f64]) -> Result<f64> {
    if residuals.len() != measured_temps.len() {
        return Err(Error::data(format!(
            "residuals ({}) and measured temperatures ({}) differ in length",
            residuals.len(),
            measured_temps.len()
        )));
    }
    let mut s = 0.0;
    for (eps, t) in residuals.iter().zip(measured_temps.iter()) {
        let mu = error_model.mean_at(*t);
        let sigma = error_model.std_at(*t);
        if !(sigma > 0.0) {
            return Err(Error::data(format!("non-positive error std {sigma} at temperature {t}")));
        }
        let z = (eps - mu) / sigma;
        s += (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln() + 0.5 * z * z;
    }
    Ok(-s)
}

/// Loss decomposition `S = S_prior + S_like` in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub s_prior: f64,
    pub s_like: f64,
    pub s_total: f64,
}

impl LossBreakdown {
    pub fn new(s_prior: f64, s_like: f64) -> LossBreakdown {
        LossBreakdown { s_prior, s_like, s_total: s_prior + s_like }
    }
}

/// Discrepancy threshold: the likelihood cost of residuals that exceed the
/// error mean by `(1 + gamma)` standard deviations pointwise,
/// `sum log(sigma_i sqrt(2 pi)) + n_d (1 + gamma)^2 / 2`.
pub fn morozov_threshold(error_model: &SensorErrorModel, measured_temps: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::config(format!("gamma must be non-negative, got {gamma}")));
    }
    let mut log_term = 0.0;
    for t in measured_temps {
        let sigma = error_model.std_at(*t);
        if !(sigma > 0.0) {
            return Err(Error::data(format!("non-positive error std {sigma} at temperature {t}")));
        }
        log_term += (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    }
    let n_d = measured_temps.len() as f64;
    Ok(log_term + 0.5 * n_d * (1.0 + gamma) * (1.0 + gamma))
}

/// Everything needed to evaluate the loss at one model complexity: the
/// dataset, the physical setup, the prior over the current knot set, and the
/// per-reading error statistics (precomputed once since they depend on the
/// measured, not predicted, temperatures).
pub struct LossContext {
    pub setup: ThermalSetup,
    pub prior: Prior,
    pub t_min: f64,
    pub t_max: f64,
    measurement_times: Vec<f64>,
    data_vector: Vec<f64>,
    sigma: Vec<f64>,
    mu: Vec<f64>,
    /// sum log(sigma_i sqrt(2 pi)), the residual-independent part of S_like.
    log_norm: f64,
}

impl LossContext {
    pub fn new(dataset: &Dataset, setup: &ThermalSetup, spec: &PriorSpec, n_s: usize) -> Result<Self> {
        setup.validate()?;
        if n_s < 1 {
            return Err(Error::config("model complexity n_s must be >= 1".to_string()));
        }
        let (t_min, t_max) = dataset.temperature_range()?;
        let knots: Vec<f64> =
            (0..=n_s).map(|i| t_min + (t_max - t_min) * i as f64 / n_s as f64).collect();
        let prior = Prior::new(*spec, knots)?;

        let data_vector = dataset.concatenated();
        let measured_temps = &data_vector;
        let error_model = dataset.error_model();
        let mut sigma = Vec::with_capacity(data_vector.len());
        let mut mu = Vec::with_capacity(data_vector.len());
        let mut log_norm = 0.0;
        for t in measured_temps {
            let s = error_model.std_at(*t);
            if !(s > 0.0) {
                return Err(Error::data(format!("non-positive error std {s} at temperature {t}")));
            }
            sigma.push(s);
            mu.push(error_model.mean_at(*t));
            log_norm += (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
        }
        if dataset.sensor_positions() != setup.sensor_positions.as_slice() {
            return Err(Error::config("dataset sensor positions disagree with the thermal setup".to_string()));
        }
        let last_time = *dataset.times().last().expect("non-empty dataset");
        if last_time > setup.t_total * (1.0 + 1e-12) {
            return Err(Error::data(format!(
                "dataset extends to t = {last_time} s beyond the simulated duration {} s",
                setup.t_total
            )));
        }
        Ok(LossContext {
            setup: setup.clone(),
            prior,
            t_min,
            t_max,
            measurement_times: dataset.times().to_vec(),
            data_vector,
            sigma,
            mu,
            log_norm,
        })
    }

    pub fn n_d(&self) -> usize {
        self.data_vector.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.prior.knots
    }

    /// Builds the piecewise-linear model for a parameter vector.
    pub fn model(&self, p: &[f64]) -> Result<ConductivityModel> {
        ConductivityModel::new(self.t_min, self.t_max, p.to_vec())
            .map_err(|e| Error::numerical(format!("invalid conductivity parameters: {e}")))
    }

    /// `S_like` from a prediction vector already laid out sensor-major.
    pub fn s_like_of_predictions(&self, predictions: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.data_vector.len() {
            let z = (self.data_vector[i] - predictions[i] - self.mu[i]) / self.sigma[i];
            quad += z * z;
        }
        self.log_norm + 0.5 * quad
    }

    /// Full loss at parameters `p` and discretization `disc`; runs the
    /// forward solve and returns the decomposition together with the
    /// trajectory (callers reuse it for conductivity bookkeeping).
    pub fn evaluate_with_trajectory(
        &self,
        p: &[f64],
        disc: &Discretization,
    ) -> Result<(LossBreakdown, crate::solver::TemperatureTrajectory)> {
        let s_prior = self.prior.s_prior(p)?;
        let model = self.model(p)?;
        let traj = solve(&self.setup, &model, disc)?;
        let predictions = predict_sensors(&traj, &self.setup, &self.measurement_times)?;
        let s_like = self.s_like_of_predictions(&predictions);
        Ok((LossBreakdown::new(s_prior, s_like), traj))
    }

    pub fn evaluate(&self, p: &[f64], disc: &Discretization) -> Result<LossBreakdown> {
        self.evaluate_with_trajectory(p, disc).map(|(l, _)| l)
    }

    /// Discrepancy threshold for this dataset.
    pub fn morozov(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) {
            return Err(Error::config(format!("gamma must be non-negative, got {gamma}")));
        }
        let n_d = self.data_vector.len() as f64;
        Ok(self.log_norm + 0.5 * n_d * (1.0 + gamma) * (1.0 + gamma))
    }
}

/// One-shot loss evaluation: builds the context for the model shape and
/// evaluates `S(p) = S_prior(p) + S_like(p)` at the given discretization.
pub fn loss(
    p: &[f64],
    dataset: &Dataset,
    setup: &ThermalSetup,
    disc: &Discretization,
    spec: &PriorSpec,
    n_s: usize,
) -> Result<LossBreakdown> {
    LossContext::new(dataset, setup, spec, n_s)?.evaluate(p, disc)
}
