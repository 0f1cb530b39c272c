//! Posterior sampling with Vihola's robust adaptive Metropolis algorithm,
//! plus chain diagnostics (acceptance, effective sample size, Geweke) and
//! credible bands for the conductivity curve.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::Prior;
use crate::conductivity::ConductivityModel;
use crate::error::{Error, Result};
use crate::fanout_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub target_acceptance: f64,
    pub seed: u64,
    /// Adaptation step size decays as `i^{-decay_exponent}`.
    pub decay_exponent: f64,
    /// Initial proposal standard deviation, applied per coordinate.
    pub initial_step: f64,
    /// Disable to run plain Metropolis with the initial proposal.
    pub adapt: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_samples: 100_000,
            burn_in: 10_000,
            target_acceptance: 0.234,
            seed: 0,
            decay_exponent: 2.0 / 3.0,
            initial_step: 3e-4,
            adapt: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_samples {
            return Err(Error::config(format!(
                "burn-in {} must be smaller than the sample count {}",
                self.burn_in, self.n_samples
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::config(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if !(self.initial_step > 0.0) || !(self.decay_exponent > 0.0) {
            return Err(Error::config("initial step and decay exponent must be positive".to_string()));
        }
        Ok(())
    }
}

/// Target density value at a point, split so the chain can record the
/// likelihood part for information criteria.
#[derive(Debug, Clone, Copy)]
pub struct LogDensity {
    pub log_posterior: f64,
    pub log_likelihood: f64,
}

impl LogDensity {
    /// For targets without a prior/likelihood split.
    pub fn plain(log_posterior: f64) -> LogDensity {
        LogDensity { log_posterior, log_likelihood: log_posterior }
    }
}

/// A realized chain: every post-initial state, row-major.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    samples: Vec<f64>,
    n_p: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub log_likelihoods: Vec<f64>,
    pub ess: Vec<f64>,
    pub geweke: GewekeResult,
    pub seed: u64,
}

impl PosteriorChain {
    pub fn n_samples(&self) -> usize {
        self.samples.len() / self.n_p
    }

    pub fn n_params(&self) -> usize {
        self.n_p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_p..(i + 1) * self.n_p]
    }

    /// Post-burn-in sample rows.
    pub fn kept(&self) -> impl Iterator<Item = &[f64]> + Clone {
        (self.burn_in..self.n_samples()).map(|i| self.row(i))
    }

    pub fn n_kept(&self) -> usize {
        self.n_samples() - self.burn_in
    }

    /// Post-burn-in log-likelihood values, aligned with [`Self::kept`].
    pub fn kept_log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods[self.burn_in..]
    }

    /// Post-burn-in values of one coordinate.
    pub fn kept_coordinate(&self, j: usize) -> Vec<f64> {
        self.kept().map(|r| r[j]).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_p];
        for row in self.kept() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_kept() as f64;
        for m in mean.iter_mut() {
            *m /= n;
        }
        mean
    }

    /// Wraps an existing sample matrix (row-major) so the diagnostic and
    /// band helpers apply to externally produced series. Acceptance and
    /// per-sample likelihoods are not meaningful here and are left empty.
    pub fn from_samples(samples: Vec<f64>, n_p: usize, burn_in: usize) -> Result<PosteriorChain> {
        if n_p == 0 || samples.len() % n_p != 0 {
            return Err(Error::data(format!(
                "sample matrix of length {} is not a whole number of {n_p}-vectors",
                samples.len()
            )));
        }
        let n = samples.len() / n_p;
        if burn_in >= n {
            return Err(Error::data(format!("burn-in {burn_in} must be smaller than the {n} samples")));
        }
        Ok(PosteriorChain {
            samples,
            n_p,
            burn_in,
            acceptance_rate: f64::NAN,
            log_likelihoods: Vec::new(),
            ess: Vec::new(),
            geweke: GewekeResult { pass: false, statistics: Vec::new(), failure_reason: None },
            seed: 0,
        })
    }

    /// CSV matrix of all samples, one row per step, `p1..pN` columns.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.n_p {
            if j > 1 {
                out.push(',');
            }
            out.push_str(&format!("p{j}"));
        }
        out.push('\n');
        for i in 0..self.n_samples() {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Sidecar metadata persisted next to a chain matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub config: ChainConfig,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub ess: Vec<f64>,
    pub geweke_pass: bool,
    pub geweke_statistics: Vec<(f64, f64)>,
}

impl ChainMetadata {
    pub fn of(chain: &PosteriorChain, config: &ChainConfig) -> ChainMetadata {
        ChainMetadata {
            config: *config,
            seed: chain.seed,
            acceptance_rate: chain.acceptance_rate,
            ess: chain.ess.clone(),
            geweke_pass: chain.geweke.pass,
            geweke_statistics: chain.geweke.statistics.clone(),
        }
    }
}

/// Runs one robust adaptive Metropolis chain: proposals `y = x + S u` with
/// `u ~ N(0, I)`; after every step the factor is updated by
/// `S S' <- S (I + eta_i (alpha_i - alpha*) u u' / |u|^2) S'` and
/// re-factorized, `eta_i = i^{-decay}`. See Vihola, "Robust adaptive
/// Metropolis algorithm with coerced acceptance rate" (2012).
pub fn sample<F>(log_density: &F, x0: &[f64], config: &ChainConfig) -> Result<PosteriorChain>
where
    F: Fn(&[f64]) -> LogDensity,
{
    config.validate()?;
    let n_p = x0.len();
    if n_p == 0 {
        return Err(Error::config("cannot sample an empty parameter vector".to_string()));
    }
    let d0 = log_density(x0);
    if !d0.log_posterior.is_finite() {
        return Err(Error::numerical(format!(
            "log posterior is not finite at the chain start ({})",
            d0.log_posterior
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = x0.to_vec();
    let mut lp = d0.log_posterior;
    let mut ll = d0.log_likelihood;
    let mut s = DMatrix::<f64>::identity(n_p, n_p) * config.initial_step;

    let mut samples = Vec::with_capacity(config.n_samples * n_p);
    let mut log_likelihoods = Vec::with_capacity(config.n_samples);
    let mut accepted = 0usize;
    let mut u = DVector::<f64>::zeros(n_p);

    for i in 1..=config.n_samples {
        for v in u.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let v = &s * &u;
        let y: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
        let dy = log_density(&y);
        let log_ratio = dy.log_posterior - lp;
        let alpha = if dy.log_posterior.is_finite() {
            log_ratio.min(0.0).exp()
        } else {
            0.0
        };
        if alpha > 0.0 && rng.random::<f64>().ln() < log_ratio {
            x = y;
            lp = dy.log_posterior;
            ll = dy.log_likelihood;
            accepted += 1;
        }
        samples.extend_from_slice(&x);
        log_likelihoods.push(ll);

        if config.adapt {
            // Rank-one coercion toward the target acceptance; the scalar
            // 1 + eta (alpha - target) stays positive, so the updated
            // matrix remains positive definite.
            let eta = (i as f64).powf(-config.decay_exponent);
            let c = eta * (alpha - config.target_acceptance) / u.norm_squared().max(1e-300);
            let mut m = &s * s.transpose();
            m.ger(c, &v, &v, 1.0);
            if let Some(chol) = Cholesky::new(m) {
                s = chol.l();
            }
        }
    }

    let mut chain = PosteriorChain {
        samples,
        n_p,
        burn_in: config.burn_in,
        acceptance_rate: accepted as f64 / config.n_samples as f64,
        log_likelihoods,
        ess: Vec::new(),
        geweke: GewekeResult { pass: false, statistics: Vec::new(), failure_reason: None },
        seed: config.seed,
    };
    chain.ess = effective_sample_size(&chain);
    chain.geweke = if chain.n_kept() >= 10 {
        geweke(&chain)?
    } else {
        GewekeResult {
            pass: false,
            statistics: Vec::new(),
            failure_reason: Some("fewer than 10 post-burn-in samples".to_string()),
        }
    };
    Ok(chain)
}

/// Per-parameter effective sample size of the post-burn-in chain:
/// `n / (1 + 2 sum rho_k)` with the autocorrelation sum truncated at the
/// first negative term.
pub fn effective_sample_size(chain: &PosteriorChain) -> Vec<f64> {
    (0..chain.n_params()).map(|j| series_ess(&chain.kept_coordinate(j))).collect()
}

/// ESS of a scalar series (post-burn-in already applied by the caller).
pub fn series_ess(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
    if var <= 1e-300 {
        return nf;
    }
    let mut rho_sum = 0.0;
    for k in 1..n {
        let mut c = 0.0;
        for t in 0..(n - k) {
            c += (xs[t] - mean) * (xs[t + k] - mean);
        }
        let rho = c / (nf * var);
        if rho < 0.0 {
            break;
        }
        rho_sum += rho;
    }
    (nf / (1.0 + 2.0 * rho_sum)).min(nf)
}

#[derive(Debug, Clone)]
pub struct GewekeResult {
    pub pass: bool,
    /// Per-parameter `(|gap / mu_10|, |gap / mu_50|)`.
    pub statistics: Vec<(f64, f64)>,
    pub failure_reason: Option<String>,
}

/// Geweke-style stationarity check: compares the mean of the first 10% of
/// the post-burn-in chain with the mean of its last 50%; passes when both
/// relative gaps are at most 1e-2 for every parameter.
pub fn geweke(chain: &PosteriorChain) -> Result<GewekeResult> {
    let n = chain.n_kept();
    if n < 10 {
        return Err(Error::data(format!("Geweke check needs at least 10 post-burn-in samples, got {n}")));
    }
    let n10 = (n / 10).max(1);
    let n50 = (n / 2).max(1);
    let mut statistics = Vec::with_capacity(chain.n_params());
    let mut pass = true;
    let mut failure_reason = None;
    for j in 0..chain.n_params() {
        let xs = chain.kept_coordinate(j);
        let mu10 = xs[..n10].iter().sum::<f64>() / n10 as f64;
        let mu50 = xs[n - n50..].iter().sum::<f64>() / n50 as f64;
        if mu10.abs() <= 1e-30 || mu50.abs() <= 1e-30 {
            pass = false;
            failure_reason
                .get_or_insert_with(|| format!("window mean of parameter {j} is within 1e-30 of zero"));
            statistics.push((f64::INFINITY, f64::INFINITY));
            continue;
        }
        let gap = mu10 - mu50;
        let s10 = (gap / mu10).abs();
        let s50 = (gap / mu50).abs();
        statistics.push((s10, s50));
        if !(s10 <= 1e-2 && s50 <= 1e-2) {
            pass = false;
            failure_reason.get_or_insert_with(|| {
                format!("parameter {j} drifted: relative gaps {s10:.3e} / {s50:.3e}")
            });
        }
    }
    Ok(GewekeResult { pass, statistics, failure_reason })
}

/// Pointwise credible band of the conductivity curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CredibleBand {
    pub temperatures: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// Evaluates every post-burn-in sample's piecewise-linear curve at the query
/// temperatures and takes empirical tail quantiles (`(1-level)/2` trimmed
/// from each side) plus the pointwise mean.
pub fn credible_band(
    chain: &PosteriorChain,
    t_min: f64,
    t_max: f64,
    temperatures: &[f64],
    level: f64,
) -> Result<CredibleBand> {
    if chain.n_kept() == 0 {
        return Err(Error::data("credible band needs a non-empty post-burn-in chain".to_string()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("credible level must lie in (0, 1), got {level}")));
    }
    let models: Vec<ConductivityModel> = chain
        .kept()
        .map(|p| ConductivityModel::new(t_min, t_max, p.to_vec()))
        .collect::<Result<_>>()?;
    let q_lo = (1.0 - level) / 2.0;
    let q_hi = 1.0 - q_lo;

    let mut lower = Vec::with_capacity(temperatures.len());
    let mut mean = Vec::with_capacity(temperatures.len());
    let mut upper = Vec::with_capacity(temperatures.len());
    let mut values = vec![0.0; models.len()];
    for &t in temperatures {
        for (v, m) in values.iter_mut().zip(&models) {
            *v = m.evaluate(t);
        }
        mean.push(values.iter().sum::<f64>() / values.len() as f64);
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite curve values"));
        lower.push(quantile_sorted(&values, q_lo));
        upper.push(quantile_sorted(&values, q_hi));
    }
    Ok(CredibleBand { temperatures: temperatures.to_vec(), lower, mean, upper, level })
}

/// Nearest-rank quantile of an ascending slice. The small slack keeps ranks
/// stable when `q * n` sits within rounding error of an integer.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64 - 1e-9).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// How chains pick their starting points.
pub enum ChainInit<'a> {
    /// Every chain starts at the same point (typically the MAP estimate).
    AtPoint(Vec<f64>),
    /// Each chain starts at an independent positive draw from the prior.
    PriorDraw(&'a Prior),
}

/// A set of independent chains with their pooled post-burn-in samples.
#[derive(Debug, Clone)]
pub struct MultiChainRun {
    pub chains: Vec<PosteriorChain>,
    /// Pooled post-burn-in samples, row-major.
    pub pooled: Vec<f64>,
    pub pooled_log_likelihoods: Vec<f64>,
    pub n_p: usize,
}

impl MultiChainRun {
    pub fn n_pooled(&self) -> usize {
        self.pooled.len() / self.n_p
    }

    pub fn pooled_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_pooled()).map(|i| &self.pooled[i * self.n_p..(i + 1) * self.n_p])
    }

    /// A synthetic chain holding the pooled samples (burn-in zero), so the
    /// band and diagnostic helpers apply unchanged.
    pub fn pooled_chain(&self) -> PosteriorChain {
        PosteriorChain {
            samples: self.pooled.clone(),
            n_p: self.n_p,
            burn_in: 0,
            acceptance_rate: self.chains.iter().map(|c| c.acceptance_rate).sum::<f64>()
                / self.chains.len() as f64,
            log_likelihoods: self.pooled_log_likelihoods.clone(),
            ess: self.chains.iter().fold(vec![0.0; self.n_p], |mut acc, c| {
                for (a, e) in acc.iter_mut().zip(&c.ess) {
                    *a += e;
                }
                acc
            }),
            geweke: GewekeResult {
                pass: self.chains.iter().all(|c| c.geweke.pass),
                statistics: Vec::new(),
                failure_reason: None,
            },
            seed: self.chains.first().map(|c| c.seed).unwrap_or(0),
        }
    }
}

/// Runs `k_chains` independent chains concurrently. Chain 0 keeps the
/// configured seed (so a single-chain run reproduces [`sample`] exactly);
/// later chains use derived stream seeds.
pub fn multi_chain_run<F>(
    log_density: &F,
    k_chains: usize,
    init: ChainInit<'_>,
    config: &ChainConfig,
) -> Result<MultiChainRun>
where
    F: Fn(&[f64]) -> LogDensity + Sync,
{
    if k_chains == 0 {
        return Err(Error::config("at least one chain is required".to_string()));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..k_chains)
        .map(|c| if c == 0 { config.seed } else { fanout_seed(config.seed, c as u64) })
        .collect();
    let starts: Vec<Vec<f64>> = match &init {
        ChainInit::AtPoint(p) => vec![p.clone(); k_chains],
        ChainInit::PriorDraw(prior) => seeds
            .iter()
            .map(|s| {
                // Start draws come from a stream separated from the chain's
                // own randomness.
                let mut rng = ChaCha8Rng::seed_from_u64(fanout_seed(*s, u64::MAX / 2));
                prior.sample_positive(&mut rng)
            })
            .collect(),
    };

    let chains: Result<Vec<PosteriorChain>> = seeds
        .par_iter()
        .zip(starts.par_iter())
        .map(|(seed, x0)| {
            let cfg = ChainConfig { seed: *seed, ..*config };
            sample(log_density, x0, &cfg)
        })
        .collect();
    let chains = chains?;

    let n_p = chains[0].n_params();
    let mut pooled = Vec::new();
    let mut pooled_ll = Vec::new();
    for c in &chains {
        for row in c.kept() {
            pooled.extend_from_slice(row);
        }
        pooled_ll.extend_from_slice(c.kept_log_likelihoods());
    }
    Ok(MultiChainRun { chains, pooled, pooled_log_likelihoods: pooled_ll, n_p })
}
