//! Run configuration: one TOML file with sections mirroring the library
//! module types. Every section is optional and falls back to the documented
//! defaults, so an empty file is a complete configuration. Loading resolves
//! the file into a fully materialized form (defaults filled in, per-consumer
//! seeds derived from the master seed) which reports echo back verbatim, so
//! any run is reproducible from its report alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::RefinementConfig;
use crate::bayes::{PriorSpec, SensorErrorModel};
use crate::data::{Dataset, GroundTruthConductivity, MeasurementSchedule};
use crate::error::{Error, Result};
use crate::fanout_seed;
use crate::mcmc::ChainConfig;
use crate::solver::{AmbientTemperature, Discretization, ThermalSetup};

/// Version of the configuration and report schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Seed stream indices for [`fanout_seed`], one per randomized consumer.
pub const STREAM_SYNTHESIS: u64 = 0;
pub const STREAM_CHAIN: u64 = 1;
pub const STREAM_STUDY: u64 = 2;

/// Reference setup of the simulated measurement protocol: a paraffin rod
/// heated from one end through a Robin boundary, insulated poorly enough to
/// leak laterally, instrumented with four axial sensors.
pub fn default_setup() -> ThermalSetup {
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

/// Default measurement schedule: a reading every 20 s for 12 hours.
pub fn default_schedule() -> MeasurementSchedule {
    MeasurementSchedule { cadence: 20.0, count: 2160 }
}

/// Default fixed discretization for the non-adaptive commands.
pub fn default_discretization() -> Discretization {
    Discretization { n_e: 24, n_t: 512 }
}

/// File inputs; everything absent falls back to the embedded tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileSection {
    /// Sensor error curve CSV (`temp_C,mean_C,std_C`).
    pub error_curve: Option<PathBuf>,
    /// Ground-truth conductivity anchor CSV (`temp_C,k_W_per_mC`).
    pub anchors: Option<PathBuf>,
    /// Measurement dataset CSV; commands that need data and find none here
    /// synthesize it from the configured setup and seed.
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Master seed; every randomized consumer gets a stream derived from it.
    pub seed: u64,
    /// Worker thread cap; absent lets the runtime decide.
    pub threads: Option<usize>,
    /// Model complexity for the fixed-complexity commands (fit, sample).
    pub n_s: usize,
    pub setup: ThermalSetup,
    pub schedule: MeasurementSchedule,
    pub files: FileSection,
    pub discretization: Discretization,
    pub refinement: RefinementConfig,
    pub chain: ChainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 42,
            threads: None,
            n_s: 8,
            setup: default_setup(),
            schedule: default_schedule(),
            files: FileSection::default(),
            discretization: default_discretization(),
            refinement: RefinementConfig::default(),
            chain: ChainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses and resolves a configuration. The chain seed in the file is
    /// ignored: all randomness flows from the master seed.
    pub fn from_toml_str(content: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(content).map_err(|e| Error::config(format!("config file: {e}")))?;
        cfg.resolved()
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("reading {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&content)
    }

    /// Validates and derives the per-consumer seeds from the master seed.
    pub fn resolved(mut self) -> Result<RunConfig> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (this build writes {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_s < 1 {
            return Err(Error::config("n_s must be at least 1".to_string()));
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::config("threads must be at least 1".to_string()));
            }
        }
        self.setup.validate()?;
        self.refinement.validate()?;
        self.chain.seed = fanout_seed(self.seed, STREAM_CHAIN);
        self.chain.validate()?;
        MeasurementSchedule::new(self.schedule.cadence, self.schedule.count)?;
        Discretization::new(self.discretization.n_e, self.discretization.n_t)?;
        Ok(self)
    }

    /// The fully materialized TOML form, as echoed by reports.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("serializing config: {e}")))
    }

    /// Seed stream for synthetic data generation.
    pub fn synthesis_seed(&self) -> u64 {
        fanout_seed(self.seed, STREAM_SYNTHESIS)
    }

    /// Seed stream for the study pairs.
    pub fn study_seed(&self) -> u64 {
        fanout_seed(self.seed, STREAM_STUDY)
    }

    /// Sensor error curves: the configured file, or the embedded table.
    pub fn error_model(&self) -> Result<SensorErrorModel> {
        match &self.files.error_curve {
            Some(p) => SensorErrorModel::from_csv_path(p),
            None => SensorErrorModel::from_csv_str(crate::data::DEFAULT_ERROR_CSV),
        }
    }

    /// Ground-truth conductivity: the configured anchors, or the embedded
    /// paraffin table.
    pub fn truth(&self) -> Result<GroundTruthConductivity> {
        match &self.files.anchors {
            Some(p) => {
                let content = std::fs::read_to_string(p)
                    .map_err(|e| Error::data(format!("reading {}: {e}", p.display())))?;
                GroundTruthConductivity::from_csv_str(&content)
            }
            None => GroundTruthConductivity::from_csv_str(crate::data::DEFAULT_ANCHORS_CSV),
        }
    }

    /// The measurement dataset: loaded from the configured file when one is
    /// set, otherwise synthesized from the setup, schedule, and seed.
    pub fn dataset(&self) -> Result<Dataset> {
        let error_model = self.error_model()?;
        match &self.files.dataset {
            Some(p) => Dataset::from_csv_path(p, &self.setup.sensor_positions, error_model),
            None => crate::data::synthesize(
                &self.truth()?,
                &self.setup,
                &self.schedule,
                &error_model,
                self.synthesis_seed(),
            ),
        }
    }

    /// Prior for a fixed-complexity fit over the dataset's measured range.
    pub fn prior_spec(&self, t_min: f64, t_max: f64) -> PriorSpec {
        self.refinement.prior_spec(t_min, t_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_config() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        let def = RunConfig::default().resolved().unwrap();
        assert_eq!(cfg, def);
        assert_eq!(cfg.setup.sensor_positions.len(), 4);
        assert_eq!(cfg.schedule.count, 2160);
    }

    #[test]
    fn chain_seed_is_derived_not_configured() {
        let cfg = RunConfig::from_toml_str("seed = 7\n[chain]\nseed = 999\n").unwrap();
        assert_eq!(cfg.chain.seed, fanout_seed(7, STREAM_CHAIN));
    }

    #[test]
    fn partial_sections_override_single_fields() {
        let cfg = RunConfig::from_toml_str("[refinement]\ngamma = 0.02\n").unwrap();
        assert_eq!(cfg.refinement.gamma, 0.02);
        assert_eq!(cfg.refinement.delta, RefinementConfig::default().delta);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = RunConfig::from_toml_str("gama = 0.01\n").unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::from_toml_str("seed = 3\n[discretization]\nn_e = 12\nn_t = 64\n").unwrap();
        let echoed = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, echoed);
    }

    #[test]
    fn rejects_future_schema() {
        let err = RunConfig::from_toml_str("schema_version = 99\n").unwrap_err();
        assert_eq!(err.kind(), "config");
    }
}
