//! Nested adaptive refinement: an inner loop refines the space/time mesh at
//! fixed model complexity until the discrepancy principle or stabilization
//! stops it, and an outer loop doubles the number of conductivity segments
//! until extra complexity stops paying for itself.

use serde::{Deserialize, Serialize};

use crate::bayes::{LossBreakdown, LossContext, PriorSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fanout_seed;
use crate::mcmc::{credible_band, sample, ChainConfig, CredibleBand, LogDensity, PosteriorChain};
use crate::optimize::{map_estimate, MapResult, OptimizerConfig};
use crate::selection::{bic, complexity_justified, dic, SelectionRecord, IMPROVEMENT_TOL};
use crate::solver::{min_elements_for_timesteps, Discretization, ThermalSetup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    /// Discrepancy tolerance ratio in `S_like <= threshold(gamma)`.
    pub gamma: f64,
    /// Stabilization window length.
    pub delta: usize,
    /// Relative standard deviation threshold for stabilization.
    pub phi: f64,
    /// Model complexity cap.
    pub max_n_s: usize,
    /// Starting knot values for the first complexity (two knots).
    pub initial_p0: [f64; 2],
    /// Skip MCMC on non-final complexities and select on BIC alone.
    pub bic_only: bool,
    /// Safety cap on inner refinement iterations; generous enough that
    /// ordinary runs stop through the two stopping rules long before it.
    pub max_mesh_iterations: usize,
    /// Relative improvement needed to justify doubled complexity.
    pub improvement_tol: f64,
    /// Prior mean for the conductivity knots.
    pub mu_k: f64,
    /// Prior standard deviation for the conductivity knots.
    pub sigma_k: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            gamma: 0.01,
            delta: 3,
            phi: 0.05,
            max_n_s: 16,
            initial_p0: [0.3, 0.3],
            bic_only: false,
            max_mesh_iterations: 40,
            improvement_tol: IMPROVEMENT_TOL,
            mu_k: 0.3,
            sigma_k: 0.03,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.delta < 2 {
            return Err(Error::config(format!("stabilization window must be at least 2, got {}", self.delta)));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::config(format!("phi must lie in (0, 1), got {}", self.phi)));
        }
        if self.max_n_s < 1 || self.max_mesh_iterations < 1 {
            return Err(Error::config("complexity and iteration caps must be at least 1".to_string()));
        }
        if self.initial_p0.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::config("initial knot values must be positive".to_string()));
        }
        Ok(())
    }

    pub fn prior_spec(&self, t_min: f64, t_max: f64) -> PriorSpec {
        PriorSpec {
            mu_k: self.mu_k,
            sigma_k: self.sigma_k,
            length_scale: PriorSpec::default_length_scale(t_min, t_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Space,
    Time,
}

/// One accepted inner-loop state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshIteration {
    pub iteration: usize,
    pub n_e: usize,
    pub n_t: usize,
    pub n_s: usize,
    pub s_like: f64,
    pub s_prior: f64,
    /// Doubling direction chosen this iteration; the first optimization at
    /// the initial mesh has none.
    pub axis: Option<Axis>,
    /// Loss evaluations spent this iteration, weighted as
    /// `n_eval * n_e^2 * n_t` and summed over both branch optimizations.
    pub units: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshStop {
    /// `S_like` dropped to the discrepancy threshold.
    Morozov,
    /// The last `delta` values of `S_like` flattened out.
    Stabilized,
    /// Safety cap; ordinary runs never reach it.
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct MeshRefineResult {
    pub p: Vec<f64>,
    pub n_e: usize,
    pub n_t: usize,
    pub loss: LossBreakdown,
    pub stop: MeshStop,
    pub threshold: f64,
    pub trace: Vec<MeshIteration>,
    pub total_units: f64,
}

/// Relative standard deviation of the last `delta` history values:
/// `std / |mean|` with the population divisor.
pub fn stabilization_stat(history: &[f64], delta: usize) -> Result<f64> {
    if delta < 2 {
        return Err(Error::config(format!("stabilization window must be at least 2, got {delta}")));
    }
    if history.len() < delta {
        return Err(Error::config(format!(
            "stabilization needs {delta} history values, got {}",
            history.len()
        )));
    }
    let window = &history[history.len() - delta..];
    let n = delta as f64;
    let mean = window.iter().sum::<f64>() / n;
    if mean.abs() <= 1e-30 {
        return Err(Error::numerical("stabilization statistic undefined: window mean is zero".to_string()));
    }
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean.abs())
}

struct MeshState {
    p: Vec<f64>,
    n_e: usize,
    n_t: usize,
    loss: LossBreakdown,
}

/// Inner refinement loop at fixed complexity `n_s`. Every optimization,
/// including both doubling branches, starts from `p0`: the accepted knot
/// values only feed the element-count bound, the final result, and the
/// outer loop. Restarting keeps coarse-mesh runs from dragging later
/// iterations into the flat degenerate regions their losses cannot see.
pub fn mesh_refine(
    ctx: &LossContext,
    n_s: usize,
    p0: &[f64],
    cfg: &RefinementConfig,
) -> Result<MeshRefineResult> {
    cfg.validate()?;
    if p0.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::config("mesh refinement needs a positive starting point".to_string()));
    }
    let threshold = ctx.morozov(cfg.gamma)?;

    let mut trace: Vec<MeshIteration> = Vec::new();
    let mut states: Vec<MeshState> = Vec::new();
    let mut k_min = f64::NAN;

    // Accepts an optimized state: records the trace row and refreshes the
    // minimum conductivity seen along the accepted trajectory (which the
    // time branch's element bound needs next iteration).
    fn accept(
        ctx: &LossContext,
        n_s: usize,
        r: MapResult,
        n_e: usize,
        n_t: usize,
        axis: Option<Axis>,
        units: f64,
        trace: &mut Vec<MeshIteration>,
        states: &mut Vec<MeshState>,
        k_min: &mut f64,
    ) -> Result<()> {
        let disc = Discretization { n_e, n_t };
        let (_, traj) = ctx.evaluate_with_trajectory(&r.p, &disc)?;
        *k_min = ctx.model(&r.p)?.k_min_over_elements(&traj);
        trace.push(MeshIteration {
            iteration: trace.len(),
            n_e,
            n_t,
            n_s,
            s_like: r.loss.s_like,
            s_prior: r.loss.s_prior,
            axis,
            units,
        });
        states.push(MeshState { p: r.p, n_e, n_t, loss: r.loss });
        Ok(())
    }

    let first = map_estimate(ctx, &Discretization { n_e: 1, n_t: 1 }, p0, &cfg.optimizer)?;
    let units0 = first.n_evals as f64;
    accept(ctx, n_s, first, 1, 1, None, units0, &mut trace, &mut states, &mut k_min)?;

    let finish = |stop: MeshStop, pick: usize, trace: Vec<MeshIteration>, states: &[MeshState]| {
        let s = &states[pick];
        MeshRefineResult {
            p: s.p.clone(),
            n_e: s.n_e,
            n_t: s.n_t,
            loss: s.loss,
            stop,
            threshold,
            total_units: trace.iter().map(|t| t.units).sum(),
            trace,
        }
    };

    loop {
        let current = states.last().expect("at least the initial state");
        if current.loss.s_like <= threshold {
            return Ok(finish(MeshStop::Morozov, states.len() - 1, trace, &states));
        }
        if states.len() >= cfg.delta {
            let history: Vec<f64> = trace.iter().map(|t| t.s_like).collect();
            if stabilization_stat(&history, cfg.delta)? <= cfg.phi {
                // First of the last delta values; its optimizer solution is
                // reused rather than recomputed.
                return Ok(finish(MeshStop::Stabilized, states.len() - cfg.delta, trace, &states));
            }
        }
        if trace.len() > cfg.max_mesh_iterations {
            return Ok(finish(MeshStop::IterationCap, states.len() - 1, trace, &states));
        }

        let (n_e, n_t) = (current.n_e, current.n_t);
        let disc_space = Discretization { n_e: 2 * n_e, n_t };
        let floor = min_elements_for_timesteps(2 * n_t, k_min, &ctx.setup)?;
        let disc_time = Discretization { n_e: n_e.max(floor), n_t: 2 * n_t };

        let (space, time) = rayon::join(
            || map_estimate(ctx, &disc_space, p0, &cfg.optimizer),
            || map_estimate(ctx, &disc_time, p0, &cfg.optimizer),
        );

        let cost = |r: &MapResult, d: &Discretization| {
            r.n_evals as f64 * (d.n_e * d.n_e * d.n_t) as f64
        };
        match (space, time) {
            (Ok(s), Ok(t)) => {
                let units = cost(&s, &disc_space) + cost(&t, &disc_time);
                // Equal losses fall through to the time branch.
                if s.loss.s_total < t.loss.s_total {
                    accept(ctx, n_s, s, disc_space.n_e, disc_space.n_t, Some(Axis::Space), units, &mut trace, &mut states, &mut k_min)?;
                } else {
                    accept(ctx, n_s, t, disc_time.n_e, disc_time.n_t, Some(Axis::Time), units, &mut trace, &mut states, &mut k_min)?;
                }
            }
            (Ok(s), Err(_)) => {
                let units = cost(&s, &disc_space);
                accept(ctx, n_s, s, disc_space.n_e, disc_space.n_t, Some(Axis::Space), units, &mut trace, &mut states, &mut k_min)?;
            }
            (Err(_), Ok(t)) => {
                let units = cost(&t, &disc_time);
                accept(ctx, n_s, t, disc_time.n_e, disc_time.n_t, Some(Axis::Time), units, &mut trace, &mut states, &mut k_min)?;
            }
            (Err(es), Err(et)) => {
                return Err(Error::numerical(format!(
                    "both refinement branches failed at iteration {} (n_e = {n_e}, n_t = {n_t}, n_s = {n_s}): \
                     space doubling: {es}; time doubling: {et}",
                    trace.len()
                )));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplexityStop {
    /// The discrepancy principle fired during mesh refinement.
    Morozov,
    /// The doubled complexity did not improve the criterion enough.
    NotJustified,
    /// The complexity cap was reached.
    Cap,
}

/// Everything recorded for one complexity level.
pub struct ComplexityLevel {
    pub n_s: usize,
    pub mesh: MeshRefineResult,
    pub record: SelectionRecord,
    pub chain: Option<PosteriorChain>,
}

/// The model the outer loop settled on.
#[derive(Debug, Clone)]
pub struct SelectedModel {
    pub n_s: usize,
    pub n_e: usize,
    pub n_t: usize,
    pub p: Vec<f64>,
    pub loss: LossBreakdown,
    pub threshold: f64,
}

pub struct AdaptiveResult {
    pub levels: Vec<ComplexityLevel>,
    pub selected: SelectedModel,
    /// Index of the selected level in `levels`.
    pub selected_level: usize,
    pub stop: ComplexityStop,
    /// Posterior chain at the selected complexity (always sampled, even in
    /// BIC-only mode).
    pub chain: PosteriorChain,
    pub band: CredibleBand,
    pub t_min: f64,
    pub t_max: f64,
}

fn posterior_chain_at(
    ctx: &LossContext,
    disc: &Discretization,
    p_map: &[f64],
    chain_cfg: &ChainConfig,
) -> Result<PosteriorChain> {
    let density = |p: &[f64]| match ctx.evaluate(p, disc) {
        Ok(l) => LogDensity { log_posterior: -l.s_total, log_likelihood: -l.s_like },
        Err(_) => LogDensity { log_posterior: f64::NEG_INFINITY, log_likelihood: f64::NEG_INFINITY },
    };
    sample(&density, p_map, chain_cfg)
}

fn selection_record(
    ctx: &LossContext,
    mesh: &MeshRefineResult,
    n_s: usize,
    n_d: usize,
    chain: Option<&PosteriorChain>,
) -> Result<SelectionRecord> {
    let ll_map = -mesh.loss.s_like;
    let bic_v = bic(ll_map, n_s + 1, n_d)?;
    let (dic_v, p_d) = match chain {
        Some(c) => {
            let disc = Discretization { n_e: mesh.n_e, n_t: mesh.n_t };
            let (d, p_d) = dic(c, |p| ctx.evaluate(p, &disc).map(|l| -l.s_like))?;
            (Some(d), p_d)
        }
        None => (None, 0.0),
    };
    Ok(SelectionRecord {
        n_s,
        bic: bic_v,
        dic: dic_v,
        p_d,
        log_likelihood_at_map: ll_map,
        log_posterior_at_map: -mesh.loss.s_total,
        s_like_at_map: mesh.loss.s_like,
    })
}

/// Runs the full nested refinement. The outer loop starts at one segment
/// and doubles; each continuation midpoint-refines the previous optimum as
/// the warm start. Chain seeds derive from `chain_cfg.seed` per complexity.
pub fn run_adaptive(
    dataset: &Dataset,
    setup: &ThermalSetup,
    cfg: &RefinementConfig,
    chain_cfg: &ChainConfig,
) -> Result<AdaptiveResult> {
    cfg.validate()?;
    chain_cfg.validate()?;
    let (t_min, t_max) = dataset.temperature_range()?;
    let spec = cfg.prior_spec(t_min, t_max);
    let n_d = dataset.n_d();

    let mut levels: Vec<ComplexityLevel> = Vec::new();
    let mut n_s = 1usize;
    let mut p0: Vec<f64> = cfg.initial_p0.to_vec();

    let (selected_level, stop) = loop {
        let ctx = LossContext::new(dataset, setup, &spec, n_s)?;
        let mesh = mesh_refine(&ctx, n_s, &p0, cfg)?;
        let disc = Discretization { n_e: mesh.n_e, n_t: mesh.n_t };

        if mesh.stop == MeshStop::Morozov {
            // Discrepancy reached: this complexity is selected immediately.
            let chain = posterior_chain_at(&ctx, &disc, &mesh.p, &level_chain_cfg(chain_cfg, n_s))?;
            let record = selection_record(&ctx, &mesh, n_s, n_d, Some(&chain))?;
            levels.push(ComplexityLevel { n_s, mesh, record, chain: Some(chain) });
            break (levels.len() - 1, ComplexityStop::Morozov);
        }

        let chain = if cfg.bic_only {
            None
        } else {
            Some(posterior_chain_at(&ctx, &disc, &mesh.p, &level_chain_cfg(chain_cfg, n_s))?)
        };
        let record = selection_record(&ctx, &mesh, n_s, n_d, chain.as_ref())?;
        levels.push(ComplexityLevel { n_s, mesh, record, chain });

        if levels.len() >= 2 {
            let prev = &levels[levels.len() - 2];
            let curr = &levels[levels.len() - 1];
            if !complexity_justified(&prev.record, &curr.record, cfg.improvement_tol)? {
                break (levels.len() - 2, ComplexityStop::NotJustified);
            }
        }
        if n_s >= cfg.max_n_s {
            break (levels.len() - 1, ComplexityStop::Cap);
        }

        let current = levels.last().expect("level was just pushed");
        p0 = ctx.model(&current.mesh.p)?.refine().k_values;
        n_s *= 2;
    };

    // The selected complexity always gets a posterior chain, BIC-only or not.
    let sel_n_s = levels[selected_level].n_s;
    let sel_ctx = LossContext::new(dataset, setup, &spec, sel_n_s)?;
    let sel_disc = Discretization {
        n_e: levels[selected_level].mesh.n_e,
        n_t: levels[selected_level].mesh.n_t,
    };
    if levels[selected_level].chain.is_none() {
        let chain = posterior_chain_at(
            &sel_ctx,
            &sel_disc,
            &levels[selected_level].mesh.p,
            &level_chain_cfg(chain_cfg, sel_n_s),
        )?;
        let record = selection_record(&sel_ctx, &levels[selected_level].mesh, sel_n_s, n_d, Some(&chain))?;
        levels[selected_level].record = record;
        levels[selected_level].chain = Some(chain);
    }
    let chain = levels[selected_level].chain.clone().expect("selected level has a chain");

    let band_temps: Vec<f64> = (0..=200).map(|i| t_min + (t_max - t_min) * i as f64 / 200.0).collect();
    let band = credible_band(&chain, t_min, t_max, &band_temps, 0.99)?;

    let sel = &levels[selected_level];
    let selected = SelectedModel {
        n_s: sel.n_s,
        n_e: sel.mesh.n_e,
        n_t: sel.mesh.n_t,
        p: sel.mesh.p.clone(),
        loss: sel.mesh.loss,
        threshold: sel.mesh.threshold,
    };
    Ok(AdaptiveResult { levels, selected, selected_level, stop, chain, band, t_min, t_max })
}

/// Per-complexity chain seed derivation, keeping levels independent.
fn level_chain_cfg(base: &ChainConfig, n_s: usize) -> ChainConfig {
    ChainConfig { seed: fanout_seed(base.seed, n_s as u64), ..*base }
}
